"""Sparse "simple survey" reconstruction and evaluation.

Fit regularized matrix-factorization models to sparse rating surveys,
logistic factor models to pairwise-comparison surveys, and score both
against held-out comparisons at the individual and aggregate level.
"""

__version__ = "0.1.0"

from .data import (
    PC,
    R2,
    R5,
    R100,
    ComparisonRecord,
    ComparisonSet,
    DataFormatError,
    Dataset,
    ResponseRecord,
    ScaleKind,
    SparseRatingMatrix,
    Summary,
    SurveyScale,
    Winner,
    coverage_probability,
    distinct_unordered_pairs,
    load_dataset,
    save_dataset,
    summarize,
    z_normalize,
)
from .factorization import (
    CvReport,
    FactorModel,
    FitConfig,
    ItemEmbedding,
    cross_validate,
    export_model,
    fit,
    import_model,
    latent_embedding,
    objective,
    predict,
    predict_row,
)
from .comparison import (
    ComparisonModel,
    ComparisonPrediction,
    fit_comparisons,
    predict_comparison,
)
from .evaluation import (
    AggregateTestMatrix,
    BordaTable,
    GlobalRanking,
    aggregate_test_error,
    borda_scores,
    build_aggregate_test_matrix,
    individual_test_error,
    mean_rating_ranking,
    model_test_error,
    ranking_from_scores,
)
from .experiment import (
    ErrorCurve,
    SweepConfig,
    SweepMode,
    SyntheticWorld,
    generate_responses,
    run_sweep,
    simulate_world,
)
