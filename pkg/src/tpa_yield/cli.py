"""Command-line interface: ``tpa-yield <command> [options]``.

Exit codes: 0 success, 1 data violation or bad argument, 2 I/O failure,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import anfis, mlp
from .errors import InvalidArgument, TpaYieldError
from .metrics import MetricPair, dumps_stable, emit_parity_data
from .pipeline import PipelineConfig, prepare_triple, run, screening, sweep_seed, write_screening
from .preprocess import SplitPlan, make_splits
from .schema import load_csv, synth_generate, validate, write_csv

EXIT_OK = 0
EXIT_DATA = 1
EXIT_IO = 2
EXIT_NUMERIC = 3


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=default, help="master random seed")
    parser.add_argument("--config", default=default, help="JSON file with PipelineConfig fields")
    parser.add_argument("--out-dir", dest="out_dir", default=default, help="directory for outputs")
    parser.add_argument("--threads", type=int, default=default, help="worker threads for the sweep")


def _split_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--splits", help="split plan JSON written by the split command")
    parser.add_argument("--fold", type=int, default=0)
    parser.add_argument("--repeat", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tpa-yield",
                                     description="TPA yield regression with MLP and ANFIS models.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        _global_flags(p, suppress=True)
        return p

    p = add("validate", "check a CSV against the schema and print a report")
    p.add_argument("data")
    p.add_argument("--report", help="also write the JSON report here")

    p = add("stats", "significance screening and logistic feature ranking")
    p.add_argument("data")
    p.add_argument("--alpha", type=float)

    p = add("split", "write a repeated stratified split plan")
    p.add_argument("data")
    p.add_argument("--folds", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--strat-bins", dest="strat_bins", type=int)

    p = add("train-mlp", "train one MLP on a single split triple")
    p.add_argument("data")
    _split_flags(p)
    p.add_argument("--hidden", type=int, default=21)

    p = add("train-anfis", "train one ANFIS model on a single split triple")
    p.add_argument("data")
    _split_flags(p)

    p = add("sweep", "MLP hidden-size sweep on a single split triple")
    p.add_argument("data")
    _split_flags(p)
    p.add_argument("--hidden-min", dest="hidden_min", type=int)
    p.add_argument("--hidden-max", dest="hidden_max", type=int)

    p = add("run", "full pipeline: splits, sweep, selection, final models, report")
    p.add_argument("data", nargs="?")
    p.add_argument("--alpha", type=float)

    p = add("synth", "write a synthetic dataset with a known yield function")
    p.add_argument("--n", type=int, default=381)
    p.add_argument("--noise-sd", dest="noise_sd", type=float, default=2.0)
    p.add_argument("--layout", choices=("studies", "uniform"), default="studies")
    p.add_argument("--output", default="synthetic.csv", help="file name inside --out-dir")
    return parser


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    """Config file values, overridden by any flag given on the command line."""
    cfg = PipelineConfig.load(args.config) if getattr(args, "config", None) else PipelineConfig()
    for key in ("seed", "out_dir", "threads", "alpha", "folds", "repeats", "strat_bins",
                "hidden_min", "hidden_max"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    data = getattr(args, "data", None)
    if data is not None:
        cfg.data = data
    cfg.validate()
    return cfg


def _out(cfg: PipelineConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, obj) -> None:
    path.write_text(dumps_stable(obj) + "\n", encoding="utf-8")


def cmd_validate(args, cfg: PipelineConfig) -> int:
    report = validate(load_csv(cfg.data, strict=False))
    text = dumps_stable(report.to_dict())
    print(text)
    if args.report:
        Path(args.report).write_text(text + "\n", encoding="utf-8")
    return EXIT_OK if report.ok else EXIT_DATA


def cmd_stats(args, cfg: PipelineConfig) -> int:
    dataset = load_csv(cfg.data)
    sig, ranking = screening(dataset, cfg.alpha)
    write_screening(sig, ranking, _out(cfg))
    print(sig.to_text())
    print()
    print(ranking.to_text())
    return EXIT_OK


def _plan(dataset, cfg: PipelineConfig) -> SplitPlan:
    return make_splits(dataset.n, cfg.folds, cfg.repeats, cfg.strat_bins, dataset.target(), cfg.seed)


def cmd_split(args, cfg: PipelineConfig) -> int:
    dataset = load_csv(cfg.data)
    plan = _plan(dataset, cfg)
    path = plan.save(_out(cfg) / "splits.json")
    for s in plan.assignments:
        print(f"{s.label}: train={len(s.train)} validation={len(s.validation)} test={len(s.test)}")
    print(f"wrote {path}")
    return EXIT_OK


def _triple(args, cfg: PipelineConfig):
    dataset = load_csv(cfg.data)
    plan = SplitPlan.load(args.splits) if args.splits else _plan(dataset, cfg)
    if plan.n != dataset.n:
        raise InvalidArgument(f"split plan is for {plan.n} records, data has {dataset.n}")
    try:
        split = plan.get(args.fold, args.repeat)
    except KeyError:
        raise InvalidArgument(f"no triple for fold {args.fold}, repeat {args.repeat}") from None
    return dataset, prepare_triple(dataset, split)


def _evaluate(name: str, predict, prep, y, out: Path) -> dict:
    metrics = {}
    for role in ("train", "validation", "test"):
        idx = getattr(prep.split, role)
        yhat = predict(prep.Z[idx])
        metrics[role] = MetricPair.compute(y[idx], yhat).to_dict()
        emit_parity_data(y[idx], yhat, f"{name}-{role}", out / f"parity_{name}_{role}.csv")
    return metrics


def cmd_train_mlp(args, cfg: PipelineConfig) -> int:
    dataset, prep = _triple(args, cfg)
    y = dataset.target()
    s = prep.split
    seed = sweep_seed(cfg.seed, s.fold, s.repeat, args.hidden)
    params, history = mlp.fit_hidden(args.hidden, prep.Z[s.train], y[s.train], cfg.mlp, seed)
    out = _out(cfg)
    _write(out / "mlp_model.json", params.to_dict())
    metrics = _evaluate("mlp", lambda Z: mlp.predict(params, Z), prep, y, out)
    print(dumps_stable({"split": s.label, "hidden_size": args.hidden, "iterations": len(history),
                        "metrics": metrics}))
    return EXIT_OK


def cmd_train_anfis(args, cfg: PipelineConfig) -> int:
    dataset, prep = _triple(args, cfg)
    y = dataset.target()
    s = prep.split
    Z_tr = prep.Z[s.train]
    centers = anfis.subtractive_cluster(Z_tr, cfg.subclust)
    model = anfis.init_from_clusters(centers, Z_tr, cfg.subclust)
    model, history = anfis.train_hybrid(model, Z_tr, y[s.train], replace(cfg.hybrid, seed=cfg.seed))
    out = _out(cfg)
    _write(out / "anfis_model.json", model.to_dict())
    metrics = _evaluate("anfis", lambda Z: anfis.predict(model, Z), prep, y, out)
    print(dumps_stable({"split": s.label, "rules": model.n_rules, "iterations": len(history),
                        "metrics": metrics}))
    return EXIT_OK


def cmd_sweep(args, cfg: PipelineConfig) -> int:
    dataset, prep = _triple(args, cfg)
    y = dataset.target()
    s = prep.split
    map_fn = map
    pool = None
    if cfg.threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        pool = ThreadPoolExecutor(max_workers=cfg.threads)
        map_fn = pool.map
    try:
        result = mlp.sweep_hidden_size(cfg.hidden_min, cfg.hidden_max, prep.Z[s.train], y[s.train],
                                       prep.Z[s.validation], y[s.validation], cfg.mlp,
                                       seed=cfg.seed, seed_key=(s.fold, s.repeat), map_fn=map_fn)
    finally:
        if pool is not None:
            pool.shutdown()
    (_out(cfg) / "sweep_curve.csv").write_text(result.to_csv(), encoding="utf-8")
    print(result.to_csv(), end="")
    print(f"best hidden size: {result.best_hidden}")
    return EXIT_OK


def cmd_run(args, cfg: PipelineConfig) -> int:
    result = run(cfg)
    models = result.report["models"]
    print(f"selected {result.report['splits']['selected']['label']}, hidden size {result.selected.hidden}")
    for name in ("mlp", "anfis"):
        te = models[name]["test"]
        print(f"{name}: test R2 {te['r2']:.4f}  RMSE {te['rmse']:.4f}")
    print(f"report: {result.report_path}")
    return EXIT_OK


def cmd_synth(args, cfg: PipelineConfig) -> int:
    dataset = synth_generate(args.n, cfg.seed, args.noise_sd, layout=args.layout)
    path = write_csv(dataset, _out(cfg) / args.output)
    print(f"wrote {dataset.n} records to {path}")
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "stats": cmd_stats,
    "split": cmd_split,
    "train-mlp": cmd_train_mlp,
    "train-anfis": cmd_train_anfis,
    "sweep": cmd_sweep,
    "run": cmd_run,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command not in ("synth", "run") and cfg.data is None:
            raise InvalidArgument("a data file is required")
        return COMMANDS[args.command](args, cfg)
    except TpaYieldError as exc:
        where = getattr(exc, "stage", None)
        prefix = f"error [{where}]" if where else "error"
        print(f"{prefix}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: I/O: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ArithmeticError, ValueError) as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
