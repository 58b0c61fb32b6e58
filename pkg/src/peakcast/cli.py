"""Command-line entry point: generate / train / evaluate / ablate / gradcheck.

Diagnostics go to stderr; stdout carries exactly one JSON summary object
per invocation.  All subcommands are reproducible byte-for-byte given the
same inputs and ``--seed`` (JSON keys are sorted, floats use shortest
round-trip formatting).  Exit codes: 0 success, 1 failed check, 2 bad
usage/config/file, 3 no forecast matches a requested event week.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .data.io import ParseError, load_dataset, read_manifest, write_csv, write_jsonl, write_manifest
from .data.pipeline import normalize, split_by_time
from .data.schema import DataError, FeatureSchema
from .data.synthetic import GeneratorConfig, generate_synthetic
from .evaluation import (
    MetricError,
    emit_report,
    evaluate_model,
    run_ablation,
)
from .model import ABLATION_VARIANTS, ConfigError, Forecaster, ModelConfig
from .numerics import GradCheckError, ShapeError, finite_difference_check
from .training import (
    CheckpointError,
    TrainConfig,
    TrainingError,
    load_checkpoint,
    quantile_loss,
    save_checkpoint,
    train,
)

log = logging.getLogger("peakcast")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_NO_EVENT_MATCH = 3

GRADCHECK_TOLERANCE = 1e-4


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _read_json(path, label: str) -> dict:
    path = Path(path)
    if not path.exists():
        raise CliError(f"{label} file not found: {path}")
    try:
        with path.open("r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as e:
        raise CliError(f"{label} file {path} is not valid JSON: {e}")


def _emit(summary: dict) -> None:
    print(json.dumps(summary, sort_keys=True, allow_nan=False))


def _load_bundle(data_path) -> tuple:
    """Dataset JSONL plus its sibling manifest.json."""
    data_path = Path(data_path)
    manifest = read_manifest(data_path.parent / "manifest.json")
    schema = FeatureSchema.from_dict(manifest["schema"])
    dataset = load_dataset(data_path, schema)
    return dataset, manifest


# -- subcommands ---------------------------------------------------------------


def cmd_generate(args) -> int:
    try:
        cfg = GeneratorConfig.from_dict(_read_json(args.config, "generator config"))
    except DataError as e:
        raise CliError(f"invalid generator config: {e}")
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    log.info("generating %d series over %d weeks", cfg.n_series, cfg.total_weeks)
    dataset = generate_synthetic(cfg)
    write_jsonl(dataset, out_dir / "dataset.jsonl")
    write_csv(dataset, out_dir / "dataset.csv")
    write_manifest(dataset, cfg, out_dir / "manifest.json")
    _emit(
        {
            "command": "generate",
            "n_samples": len(dataset),
            "out_dir": str(out_dir),
            "config_digest": cfg.digest(),
            "test_origin": cfg.test_origin(),
        }
    )
    return EXIT_OK


def _model_config_from_args(args, schema_dict=None) -> ModelConfig:
    doc = _read_json(args.model_config, "model config")
    if schema_dict is not None:
        schema = FeatureSchema.from_dict(schema_dict)
        doc.setdefault("lookback", schema.lookback)
        doc.setdefault("horizon", schema.horizon)
        doc.setdefault("static_cardinalities", list(schema.static_cardinalities))
        doc.setdefault("d_observed", schema.d_observed)
        doc.setdefault("d_context", schema.d_context)
    try:
        return ModelConfig.from_dict(doc)
    except ConfigError as e:
        raise CliError(f"invalid model config: {e}")


def _train_config_from_args(args) -> TrainConfig:
    doc = _read_json(args.train_config, "train config")
    try:
        cfg = TrainConfig.from_dict(doc)
    except ValueError as e:
        raise CliError(f"invalid train config: {e}")
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def cmd_train(args) -> int:
    dataset, manifest = _load_bundle(args.data)
    model_cfg = _model_config_from_args(args, manifest["schema"])
    train_cfg = _train_config_from_args(args)
    boundary = manifest["test_origin"] if args.boundary is None else args.boundary
    train_raw, _test = split_by_time(dataset, boundary)
    train_set, _scalers = normalize(train_raw)
    log.info(
        "training on %d samples (%d epochs, batch %d)",
        len(train_set),
        train_cfg.epochs,
        train_cfg.batch_size,
    )
    try:
        model, history = train(model_cfg, train_cfg, train_set)
    except TrainingError as e:
        raise CliError(str(e), EXIT_CHECK_FAILED)
    log.info("training took %.1fs", history.total_seconds())
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt = out_dir / "checkpoint.json"
    save_checkpoint(model, history, ckpt)
    history.write_csv(out_dir / "history.csv")
    _emit(
        {
            "command": "train",
            "checkpoint": str(ckpt),
            "epochs": len(history.epochs),
            "final_loss": history.epochs[-1].mean_loss,
            "n_parameters": model.count_parameters(),
            "config_digest": model_cfg.digest(),
        }
    )
    return EXIT_OK


def _parse_event_weeks(arg, manifest) -> list[int]:
    if arg:
        try:
            return [int(w) for w in arg.split(",") if w.strip() != ""]
        except ValueError:
            raise CliError(f"--events must be comma-separated integers, got '{arg}'")
    # default: manifest events landing inside the test-origin horizon
    t_star = manifest["test_origin"]
    horizon = manifest["schema"]["horizon"]
    weeks = [w for w in manifest.get("event_weeks", []) if t_star < w <= t_star + horizon]
    return weeks


def cmd_evaluate(args) -> int:
    dataset, manifest = _load_bundle(args.data)
    try:
        model, _history = load_checkpoint(args.checkpoint)
    except CheckpointError as e:
        raise CliError(str(e))
    boundary = manifest["test_origin"] if args.boundary is None else args.boundary
    _train_raw, test_set = split_by_time(dataset, boundary)
    event_weeks = _parse_event_weeks(args.events, manifest)
    try:
        metrics, curves, denom = evaluate_model(model, test_set, event_weeks)
    except MetricError as e:
        raise CliError(f"{e} (requested events: {event_weeks})", EXIT_NO_EVENT_MATCH)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "metrics": metrics,
        "event_weeks": event_weeks,
        "test_samples": len(test_set),
        "denominator_mass": denom,
        "model_config_digest": model.config.digest(),
    }
    with (out_dir / "metrics.json").open("w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")
    with (out_dir / "metrics.csv").open("w", encoding="utf-8", newline="") as fh:
        fh.write("metric,value\n")
        for k in sorted(metrics):
            fh.write(f"{k},{metrics[k]!r}\n")
    with (out_dir / "horizon_curves.csv").open("w", encoding="utf-8", newline="") as fh:
        fh.write("horizon,p50,p90\n")
        for h, (a, b) in enumerate(zip(curves["p50"], curves["p90"]), start=1):
            fh.write(f"{h},{a!r},{b!r}\n")
    if args.dump_traces:
        _dump_traces(model, test_set, out_dir / "traces.json")
    _emit({"command": "evaluate", "out_dir": str(out_dir), **{k: v for k, v in metrics.items()}})
    return EXIT_OK


def _dump_traces(model: Forecaster, test_set, path) -> None:
    """Attention score matrices for the first test batch, for inspection."""
    from .data.pipeline import make_batches

    scaled, _ = normalize(test_set)
    batch = make_batches(scaled, min(4, len(scaled)), shuffle_seed=None)[0]
    out = model.forward(batch, training=False, collect_traces=True)
    doc = {
        name: {
            "query_len": tr.query_len,
            "key_len": tr.key_len,
            "scores": tr.scores.tolist(),
        }
        for name, tr in out.traces.items()
    }
    with Path(path).open("w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, allow_nan=False)
        fh.write("\n")


def cmd_ablate(args) -> int:
    dataset, manifest = _load_bundle(args.data)
    model_cfg = _model_config_from_args(args, manifest["schema"])
    train_cfg = _train_config_from_args(args)
    boundary = manifest["test_origin"] if args.boundary is None else args.boundary
    event_weeks = _parse_event_weeks(args.events, manifest)
    variants = args.variants.split(",") if args.variants else list(ABLATION_VARIANTS)
    log.info("ablation over %s with %d seed(s), %d job(s)", variants, args.seeds, args.jobs)
    try:
        report = run_ablation(
            dataset,
            model_cfg,
            train_cfg,
            boundary_week=boundary,
            event_weeks=event_weeks,
            variants=variants,
            n_seeds=args.seeds,
            jobs=args.jobs,
        )
    except (TrainingError, MetricError, ValueError) as e:
        raise CliError(f"ablation failed: {e}", EXIT_CHECK_FAILED)
    out_dir = Path(args.out)
    emit_report(report, out_dir)
    _emit(
        {
            "command": "ablate",
            "out_dir": str(out_dir),
            "variants": variants,
            "n_seeds": args.seeds,
            "summary": report.summary,
        }
    )
    return EXIT_OK


def micro_gradcheck_config() -> tuple[GeneratorConfig, dict]:
    """Tiny synthetic setup for the end-to-end gradient check (B=2)."""
    gen = GeneratorConfig(
        n_series=2,
        total_weeks=16,
        lookback=8,
        horizon=4,
        n_categories=3,
        category_sensitivity=(0.0, 0.8, 1.5),
        event_calendar=(),
        seed=11,
        test_fraction=0.0,
    )
    model_overrides = {"d_hidden": 8, "n_heads": 1, "calib_hidden": 8, "seed": 3}
    return gen, model_overrides


def cmd_gradcheck(args) -> int:
    if args.train_mode:
        raise CliError(
            "gradient checking requires a deterministic forward pass; "
            "train-mode dropout makes the objective stochastic"
        )
    if args.model_config:
        doc = _read_json(args.model_config, "model config")
        try:
            model_cfg = ModelConfig.from_dict(doc)
        except ConfigError as e:
            raise CliError(f"invalid model config: {e}")
        gen, _ = micro_gradcheck_config()
        gen = replace(
            gen,
            lookback=model_cfg.lookback,
            horizon=model_cfg.horizon,
            total_weeks=2 * (model_cfg.lookback + model_cfg.horizon),
            n_categories=model_cfg.static_cardinalities[0],
            category_sensitivity=tuple(0.5 for _ in range(model_cfg.static_cardinalities[0])),
        )
    else:
        gen, overrides = micro_gradcheck_config()
        dataset_tmp = generate_synthetic(gen)
        model_cfg = ModelConfig.from_schema(dataset_tmp.schema, **overrides)
    dataset = generate_synthetic(gen)
    batch_set, _ = normalize(dataset)
    from .data.pipeline import make_batches

    batch = make_batches(batch_set, 2, shuffle_seed=None)[0]
    model = Forecaster(model_cfg)
    params = model.named_parameters()

    def objective(_params):
        out = model.forward(batch, training=False)
        return quantile_loss(batch.target, out.p50, out.p90)

    try:
        report = finite_difference_check(objective, params, eps=args.eps)
    except GradCheckError as e:
        raise CliError(f"gradient check aborted: {e}", EXIT_CHECK_FAILED)
    ok = report.max_rel_error < GRADCHECK_TOLERANCE
    _emit(
        {
            "command": "gradcheck",
            "max_rel_error": report.max_rel_error,
            "worst_param": report.worst_param,
            "n_coordinates": report.n_coordinates,
            "tolerance": GRADCHECK_TOLERANCE,
            "ok": ok,
        }
    )
    if not ok:
        log.error(
            "gradient check failed: %.3e >= %.1e at parameter %s",
            report.max_rel_error,
            GRADCHECK_TOLERANCE,
            report.worst_param,
        )
        return EXIT_CHECK_FAILED
    return EXIT_OK


# -- argument parsing ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="peakcast",
        description="Peak-demand forecasting: synthetic data, training, evaluation, ablation.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more stderr logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset (JSONL + CSV + manifest)")
    p.add_argument("--config", required=True, help="generator config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train a model and write checkpoint + history")
    p.add_argument("--model-config", required=True)
    p.add_argument("--train-config", required=True)
    p.add_argument("--data", required=True, help="dataset.jsonl (manifest.json beside it)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the training seed")
    p.add_argument("--boundary", type=int, default=None, help="train/test boundary week")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on the test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--events", default=None, help="comma-separated event weeks")
    p.add_argument("--boundary", type=int, default=None)
    p.add_argument("--dump-traces", action="store_true", help="write attention scores JSON")
    p.add_argument("--seed", type=int, default=None, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="train ablation variants and summarize metrics")
    p.add_argument("--model-config", required=True)
    p.add_argument("--train-config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--variants", default=None, help="comma-separated subset of variants")
    p.add_argument("--events", default=None)
    p.add_argument("--boundary", type=int, default=None)
    p.add_argument("--seed", type=int, default=None, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full model gradient")
    p.add_argument("--model-config", default=None, help="optional model config JSON")
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument(
        "--train-mode", action="store_true", help="(refused) gradcheck must be deterministic"
    )
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CliError as e:
        log.error("%s", e)
        return e.code
    except FileNotFoundError as e:
        log.error("%s", e)
        return EXIT_USAGE
    except (DataError, ConfigError, ShapeError, ParseError, CheckpointError) as e:
        log.error("%s", e)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
