"""Command line entry point: ``fairscaling {gen,train,compare,sweep,report}``.

Precedence for experiment settings: built-in defaults, then ``--config``
(JSON, see :mod:`fairscaling.harness.config`), then explicit flags.

On failure the process exits with status 1 (2 for usage errors) and prints a
single JSON line ``{"error": <type>, "message": <text>}`` to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from fairscaling.data_io import generate_synthetic, write_csv, write_jsonl
from fairscaling.harness import runner
from fairscaling.harness.config import ExperimentConfig, synth_config
from fairscaling.metrics import full_report, write_report_csv, write_report_json


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _strs(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


# flag -> (dest in ExperimentConfig, type, help)
EXPERIMENT_FLAGS: list[tuple[str, str, Any, str]] = [
    ("--fractions", "fractions", _floats, "train,val,test fractions (default 0.6,0.1,0.3)"),
    ("--arch", "arch", str, "linear or mlp (default mlp)"),
    ("--hidden", "hidden", int, "hidden width of the mlp (default 32)"),
    ("--lr", "lr", float, "learning rate (default 1e-4)"),
    ("--epochs", "epochs", int, "training epochs (default 10)"),
    ("--batch-size", "batch_size", int, "mini-batch size (default 10)"),
    ("--weight-decay", "weight_decay", float, "decoupled weight decay (default 0)"),
    ("--method", "method", str, "erm or fis (default fis)"),
    ("--c", "c", float, "fusion weight in [0,1] (default 0.5)"),
    ("--tau", "tau", float, "softmax temperature (default 1)"),
    ("--beta-lr", "beta_lr", float, "group-weight step size (default 0.01)"),
    ("--memory-mode", "memory_mode", str, "memory or current (default memory)"),
    ("--threshold", "threshold", float, "decision threshold for parity metrics (default 0.5)"),
    ("--seeds", "seeds", _ints, "comma-separated run seeds (default 0,1,2)"),
    ("--outdir", "outdir", str, "output directory (default runs)"),
]

SYNTH_FLAGS: list[tuple[str, str, Any, str]] = [
    ("--n-samples", "n_samples", int, "number of synthetic samples"),
    ("--feature-dim", "feature_dim", int, "feature dimension"),
    ("--num-groups", "num_groups", int, "number of groups"),
    ("--proportions", "group_proportions", _floats, "group proportions"),
    ("--positive-rate", "positive_rate", _floats, "per-group positive rate"),
    ("--separation", "class_separation", _floats, "per-group class separation"),
    ("--label-noise", "label_noise", _floats, "per-group label flip probability"),
    ("--tilt", "direction_tilt", _floats, "per-group class-direction tilt in degrees"),
    ("--data-seed", "seed", int, "synthetic data seed"),
    ("--group-names", "group_names", _strs, "comma-separated group names"),
]


def _add_synth_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("synthetic data")
    for flag, dest, typ, help_ in SYNTH_FLAGS:
        g.add_argument(flag, dest=f"synth_{dest}", type=typ, default=None, help=help_)


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON experiment config")
    g = p.add_argument_group("experiment")
    for flag, dest, typ, help_ in EXPERIMENT_FLAGS:
        g.add_argument(flag, dest=dest, type=typ, default=None, help=help_)
    g.add_argument(
        "--differentiate-weights",
        dest="detach",
        action="store_const",
        const=False,
        default=None,
        help="backpropagate through the scaling softmax instead of detaching it",
    )
    g.add_argument(
        "--no-model-selection",
        dest="select_on_validation",
        action="store_const",
        const=False,
        default=None,
        help="keep the last epoch instead of the best validation AUC",
    )
    g.add_argument("--jobs", type=int, default=1, help="parallel worker processes for seeds")
    d = p.add_argument_group("file data")
    d.add_argument("--data", dest="data_path", help="CSV file instead of synthetic data")
    d.add_argument("--feature-cols", type=_strs, help="comma-separated feature columns")
    d.add_argument("--label-col", default="label")
    d.add_argument("--group-col", default="group")
    d.add_argument("--id-col", default=None)
    _add_synth_flags(p)


def _synth_overrides(args: argparse.Namespace) -> dict[str, Any]:
    return {
        dest: getattr(args, f"synth_{dest}")
        for _, dest, _, _ in SYNTH_FLAGS
        if getattr(args, f"synth_{dest}") is not None
    }


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    data: dict[str, Any] = {}
    if args.config is not None:
        data = json.loads(args.config.read_text())
    for _, dest, _, _ in EXPERIMENT_FLAGS:
        if getattr(args, dest) is not None:
            data[dest] = getattr(args, dest)
    for dest in ("detach", "select_on_validation"):
        if getattr(args, dest) is not None:
            data[dest] = getattr(args, dest)
    synth = _synth_overrides(args)
    if synth:
        merged = dict(data.get("synth") or {})
        merged.update(synth)
        data["synth"] = merged
    if args.data_path:
        if not args.feature_cols:
            raise ValueError("--data requires --feature-cols")
        data["data_path"] = args.data_path
        data["schema"] = {
            "feature_columns": args.feature_cols,
            "label_column": args.label_col,
            "group_column": args.group_col,
            "id_column": args.id_col,
        }
        data.setdefault("synth", None)
    return ExperimentConfig.from_dict(data)


def cmd_gen(args: argparse.Namespace) -> int:
    ds = generate_synthetic(synth_config(_synth_overrides(args)))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.format == "jsonl":
        write_jsonl(ds, out)
    else:
        write_csv(ds, out)
    print(json.dumps({"written": str(out), "n_samples": len(ds), "feature_dim": ds.feature_dim}))
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    seed = args.seed if args.seed is not None else cfg.seeds[0]
    out = Path(cfg.outdir)
    record = runner.run_seed(cfg, seed, out)
    summary = {k: record["test"][k] for k in runner.COMPARISON_METRICS}
    print(json.dumps({"run": str(out / f"run_{seed}.json"), "test": summary}))
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    table = runner.compare(cfg, outdir=cfg.outdir, jobs=args.jobs)
    for row in table["rows"]:
        print(json.dumps({k: row[k] for k in row if k.endswith("_mean") or k in ("method", "best")}))
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    values = args.values if args.values is not None else (
        [0.0, 0.25, 0.5, 0.75, 1.0] if args.param == "c" else [0.1, 1.0, 10.0, 100.0]
    )
    rows = runner.sweep(cfg, args.param, values, outdir=cfg.outdir, jobs=args.jobs)
    for row in rows:
        print(json.dumps(row))
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    from fairscaling.data_io import read_predictions_csv

    names = args.group_names or ()
    ev = read_predictions_csv(args.predictions, args.threshold, args.num_groups, names)
    report = full_report(ev)
    if args.json:
        write_report_json(report, args.json)
    if args.csv:
        write_report_csv(report, args.csv)
    print(json.dumps(report.to_dict()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairscaling", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    _add_synth_flags(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train and evaluate a single run")
    _add_experiment_flags(p)
    p.add_argument("--seed", type=int, default=None, help="run seed (default: first of --seeds)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("compare", help="erm vs fis over all seeds")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="fis over a grid of c or tau")
    _add_experiment_flags(p)
    p.add_argument("--param", choices=runner.SWEEP_PARAMS, default="c")
    p.add_argument("--values", type=_floats, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="metrics from a predictions CSV")
    p.add_argument("--predictions", required=True, type=Path)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--num-groups", type=int, default=None)
    p.add_argument("--group-names", type=_strs, default=None)
    p.add_argument("--json", type=Path, default=None, help="write the report as JSON")
    p.add_argument("--csv", type=Path, default=None, help="write the report as a one-row CSV")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
