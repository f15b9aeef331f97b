"""Command-line front end for reproducible survey-reconstruction runs.

Each subcommand reads CSV/JSON inputs, runs one pipeline stage, and writes
its outputs plus a manifest into ``--out``. Outputs embed the seed and a
hash of the resolved configuration, and rerunning with the same config and
seed reproduces the data files byte for byte.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .comparison import comparison_scores, export_comparison_model, fit_comparisons
from .data import (
    Dataset,
    DataFormatError,
    SurveyScale,
    load_dataset,
    save_dataset,
    summarize,
    z_normalize,
)
from .evaluation import (
    aggregate_test_error,
    borda_scores,
    build_aggregate_test_matrix,
    individual_test_error,
    mean_rating_ranking,
    model_test_error,
    ranking_from_scores,
)
from .experiment import (
    DEFAULT_SIZES,
    SweepConfig,
    SweepMode,
    generate_responses,
    run_sweep,
    simulate_world,
)
from .factorization import (
    FitConfig,
    cross_validate,
    export_model,
    fit,
    latent_embedding,
    predict_row,
)

COMMANDS = ("simulate", "fit", "cv", "eval", "sweep", "embed", "summarize")


@dataclass(frozen=True)
class RunConfig:
    """A fully resolved command invocation."""

    command: str
    options: dict[str, Any]

    @property
    def seed(self) -> int:
        return int(self.options["seed"])

    def config_hash(self) -> str:
        canonical = json.dumps(
            {"command": self.command, **self.options}, sort_keys=True, default=str
        )
        return hashlib.sha256(canonical.encode()).hexdigest()[:12]


def _int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simplesurvey",
        description="Sparse survey reconstruction, evaluation, and simulation.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, *, needs_data: bool) -> None:
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="random seed (default 0)")
        p.add_argument("--scale", choices=["r2", "r5", "r100", "pc"])
        if needs_data:
            p.add_argument("--ratings", help="ratings CSV (rating scales)")
            p.add_argument("--comparisons", help="held-out comparisons CSV")
            p.add_argument(
                "--training-comparisons", dest="training_comparisons",
                help="training comparisons CSV (pc scale)",
            )

    def add_fit_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--k", type=int, help="factor rank")
        p.add_argument("--gamma", type=float, help="regularization weight")
        p.add_argument("--max-sweeps", dest="max_sweeps", type=int)
        p.add_argument("--rel-tol", dest="rel_tol", type=float)

    p = sub.add_parser("simulate", help="emit a synthetic survey dataset")
    add_common(p, needs_data=False)
    p.add_argument("--m", type=int, help="respondent count")
    p.add_argument("--n", type=int, help="item count")
    p.add_argument("--true-rank", dest="true_rank", type=int)
    p.add_argument("--noise-sd", dest="noise_sd", type=float)
    p.add_argument("--ratings-per-respondent", dest="ratings_per_respondent", type=int)
    p.add_argument("--heldout-per-respondent", dest="heldout_per_respondent", type=int)
    p.add_argument("--context")

    p = sub.add_parser("fit", help="fit a model and export it as JSON")
    add_common(p, needs_data=True)
    add_fit_flags(p)

    p = sub.add_parser("cv", help="grid-search (k, gamma) by repeated holdout")
    add_common(p, needs_data=True)
    p.add_argument("--k-grid", dest="k_grid", type=_int_list)
    p.add_argument("--gamma-grid", dest="gamma_grid", type=_float_list)
    p.add_argument("--holdout-fraction", dest="holdout_fraction", type=float)
    p.add_argument("--repeats", type=int)

    p = sub.add_parser("eval", help="individual and aggregate test errors")
    add_common(p, needs_data=True)
    add_fit_flags(p)

    p = sub.add_parser("sweep", help="error curve over training-set sizes")
    add_common(p, needs_data=True)
    add_fit_flags(p)
    p.add_argument("--sizes", type=_int_list, help="comma-separated sizes")
    p.add_argument("--draws", type=int)
    p.add_argument("--mode", choices=["individual", "aggregate"])
    p.add_argument("--threads", type=int)

    p = sub.add_parser("embed", help="2-d item embedding with rating quartiles")
    add_common(p, needs_data=True)
    add_fit_flags(p)

    p = sub.add_parser("summarize", help="response histogram and timing blocks")
    add_common(p, needs_data=True)
    p.add_argument("--block-size", dest="block_size", type=int)
    return parser


_DEFAULTS: dict[str, dict[str, Any]] = {
    "simulate": {
        "m": 50, "n": 100, "true_rank": 3, "noise_sd": 0.5, "scale": "r100",
        "ratings_per_respondent": 80, "heldout_per_respondent": 20,
        "context": "synthetic", "seed": 0,
    },
    "fit": {"k": 4, "gamma": 1.0, "max_sweeps": 500, "rel_tol": 1e-6, "seed": 0},
    "cv": {
        "k_grid": [1, 2, 3, 4, 5, 6, 7, 8], "gamma_grid": [0.0, 0.1, 1.0, 10.0, 100.0],
        "holdout_fraction": 0.2, "repeats": 10, "seed": 0,
    },
    "eval": {"k": 4, "gamma": 1.0, "max_sweeps": 500, "rel_tol": 1e-6, "seed": 0},
    "sweep": {
        "k": 4, "gamma": 1.0, "max_sweeps": 200, "rel_tol": 1e-5,
        "sizes": list(DEFAULT_SIZES), "draws": 100, "mode": "individual",
        "threads": 0, "seed": 0,
    },
    "embed": {"k": 4, "gamma": 1.0, "max_sweeps": 500, "rel_tol": 1e-6, "seed": 0},
    "summarize": {"block_size": 8, "seed": 0},
}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, the optional JSON config file, and explicit flags."""
    command = args.command
    options = dict(_DEFAULTS[command])
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            file_values = json.load(fh)
        if not isinstance(file_values, dict):
            raise ValueError("config file must hold a JSON object")
        for key, value in file_values.items():
            if key in ("command", "config"):
                continue
            options[key] = value
    for key, value in vars(args).items():
        if key in ("command", "config") or value is None:
            continue
        options[key] = value
    if not options.get("out"):
        raise ValueError("missing required option --out")
    options.setdefault("seed", 0)
    return RunConfig(command=command, options=options)


def _preamble(config: RunConfig) -> str:
    return f"# seed={config.seed} config_hash={config.config_hash()}"


def _write_manifest(out: Path, config: RunConfig, outputs: list[str]) -> None:
    manifest = {
        "command": config.command,
        "config": config.options,
        "seed": config.seed,
        "config_hash": config.config_hash(),
        "version": __version__,
        "outputs": outputs,
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, default=str)
        fh.write("\n")


def _write_json(path: Path, payload: dict[str, Any], config: RunConfig) -> None:
    payload = {"seed": config.seed, "config_hash": config.config_hash(), **payload}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _load_from_options(config: RunConfig) -> Dataset:
    opts = config.options
    if not opts.get("scale"):
        raise ValueError("missing required option --scale")
    scale = SurveyScale.from_name(opts["scale"])
    if not opts.get("comparisons"):
        raise ValueError("missing required option --comparisons")
    return load_dataset(
        opts.get("ratings"),
        opts["comparisons"],
        scale,
        training_comparisons_path=opts.get("training_comparisons"),
        context=opts.get("context", ""),
    )


def _fit_config(config: RunConfig) -> FitConfig:
    opts = config.options
    return FitConfig(
        k=int(opts["k"]),
        gamma=float(opts["gamma"]),
        max_sweeps=int(opts["max_sweeps"]),
        rel_tol=float(opts["rel_tol"]),
        seed=config.seed,
    )


def _training_matrix(dataset: Dataset):
    matrix = dataset.ratings
    return z_normalize(matrix) if dataset.scale.is_normalized else matrix


def _cmd_simulate(config: RunConfig, out: Path) -> list[str]:
    opts = config.options
    world = simulate_world(
        int(opts["m"]), int(opts["n"]), int(opts["true_rank"]),
        float(opts["noise_sd"]), config.seed,
    )
    dataset = generate_responses(
        world,
        SurveyScale.from_name(opts["scale"]),
        int(opts["ratings_per_respondent"]),
        int(opts["heldout_per_respondent"]),
        context=opts["context"],
    )
    paths = save_dataset(dataset, out)
    return [p.name for p in paths.values()]


def _cmd_fit(config: RunConfig, out: Path) -> list[str]:
    dataset = _load_from_options(config)
    fit_cfg = _fit_config(config)
    path = out / "model.json"
    if dataset.scale.has_range:
        model = fit(_training_matrix(dataset), fit_cfg)
        export_model(model, path)
    else:
        model = fit_comparisons(
            dataset.training_comparisons, dataset.m, dataset.n, fit_cfg,
            dataset.respondent_index, dataset.item_index,
        )
        export_comparison_model(model, path)
    return [path.name]


def _cmd_cv(config: RunConfig, out: Path) -> list[str]:
    dataset = _load_from_options(config)
    if not dataset.scale.has_range:
        raise ValueError("cv requires a rating-scale dataset")
    opts = config.options
    report = cross_validate(
        _training_matrix(dataset),
        [int(k) for k in opts["k_grid"]],
        [float(g) for g in opts["gamma_grid"]],
        float(opts["holdout_fraction"]),
        int(opts["repeats"]),
        config.seed,
    )
    path = out / "cv_report.csv"
    report.to_csv(path, preamble=_preamble(config))
    return [path.name]


def _individual_errors(dataset: Dataset, fit_cfg: FitConfig) -> list[float]:
    heldout_by_resp = dataset.heldout_comparisons.by_respondent()
    scored = [rid for rid in dataset.respondent_ids if rid in heldout_by_resp]
    if not scored:
        raise ValueError("no held-out comparisons to evaluate")
    if dataset.scale.has_range:
        model = fit(_training_matrix(dataset), fit_cfg)
        row = lambda i: predict_row(model, i)
    else:
        model = fit_comparisons(
            dataset.training_comparisons, dataset.m, dataset.n, fit_cfg,
            dataset.respondent_index, dataset.item_index,
        )
        row = lambda i: comparison_scores(model, i)
    return [
        individual_test_error(
            row(dataset.respondent_index[rid]), heldout_by_resp[rid], dataset.item_index
        )
        for rid in scored
    ]


def _global_ranking(dataset: Dataset):
    if dataset.scale.has_range:
        return mean_rating_ranking(dataset.ratings, dataset.scale)
    table = borda_scores(dataset.training_comparisons, dataset.n, dataset.item_index)
    return ranking_from_scores(table.scores)


def _cmd_eval(config: RunConfig, out: Path) -> list[str]:
    dataset = _load_from_options(config)
    errors = _individual_errors(dataset, _fit_config(config))
    ranking = _global_ranking(dataset)
    test_matrix = build_aggregate_test_matrix(
        dataset.heldout_comparisons, dataset.n, dataset.item_index
    )
    payload = {
        "individual_error": model_test_error(errors),
        "aggregate_error": aggregate_test_error(ranking, test_matrix),
        "per_respondent_errors": errors,
        "respondents": dataset.m,
        "items": dataset.n,
    }
    path = out / "errors.json"
    _write_json(path, payload, config)
    return [path.name]


def _cmd_sweep(config: RunConfig, out: Path) -> list[str]:
    dataset = _load_from_options(config)
    opts = config.options
    sweep_cfg = SweepConfig(
        sizes=tuple(int(s) for s in opts["sizes"]),
        draws=int(opts["draws"]),
        fit=_fit_config(config),
        mode=SweepMode(opts["mode"]),
    )
    threads = int(opts["threads"]) or os.cpu_count() or 1
    curve = run_sweep(dataset, sweep_cfg, threads=threads)
    path = out / "error_curve.csv"
    curve.to_csv(path, preamble=_preamble(config))
    return [path.name]


def _cmd_embed(config: RunConfig, out: Path) -> list[str]:
    dataset = _load_from_options(config)
    if not dataset.scale.has_range:
        raise ValueError("embed requires a rating-scale dataset")
    matrix = _training_matrix(dataset)
    model = fit(matrix, _fit_config(config))
    embedding = latent_embedding(model, matrix)
    ranking = mean_rating_ranking(dataset.ratings, dataset.scale)
    # quartile 1 holds the lowest-rated quarter of items, 4 the highest
    ascending = np.argsort(ranking.score_per_item, kind="stable")
    quartile = np.empty(dataset.n, dtype=np.int64)
    quartile[ascending] = np.arange(dataset.n) * 4 // dataset.n + 1
    path = out / "embedding.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(_preamble(config) + "\n")
        fh.write("item_id,dim1,dim2,quartile\n")
        for j, item_id in enumerate(dataset.item_ids):
            fh.write(
                f"{item_id},{float(embedding.coords[j, 0])!r},"
                f"{float(embedding.coords[j, 1])!r},{quartile[j]}\n"
            )
    return [path.name]


def _cmd_summarize(config: RunConfig, out: Path) -> list[str]:
    dataset = _load_from_options(config)
    summary = summarize(dataset, int(config.options["block_size"]))
    payload = {
        "histogram": [[value, count] for value, count in summary.histogram.items()],
        "block_median_seconds": summary.block_median_seconds,
    }
    path = out / "summary.json"
    _write_json(path, payload, config)
    return [path.name]


_RUNNERS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "cv": _cmd_cv,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
    "embed": _cmd_embed,
    "summarize": _cmd_summarize,
}


def execute(config: RunConfig) -> int:
    """Run one resolved command, writing outputs and a manifest."""
    out = Path(config.options["out"])
    out.mkdir(parents=True, exist_ok=True)
    outputs = _RUNNERS[config.command](config, out)
    _write_manifest(out, config, outputs)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = resolve_config(args)
        return execute(config)
    except (DataFormatError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
