"""Training, evaluation, method comparison and hyperparameter sweeps."""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from fairscaling import fis as fis_ops
from fairscaling.core import Dataset, MetricsReport, split_dataset
from fairscaling.data_io import generate_synthetic, load_tabular, write_predictions_csv
from fairscaling.harness.config import ExperimentConfig
from fairscaling.metrics import EvalSet, UndefinedMetricError, auc, full_report
from fairscaling.model import (
    ModelParams,
    OptimizerState,
    backward,
    forward,
    init_params,
    optimizer_step,
    per_sample_ce,
    predict_proba,
    save_checkpoint,
)

logger = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Splits:
    train: Dataset
    val: Dataset
    test: Dataset


def load_dataset(config: ExperimentConfig) -> Dataset:
    if config.data_path is not None:
        return load_tabular(config.data_path, config.schema)
    return generate_synthetic(config.synth)


def prepare_splits(config: ExperimentConfig, seed: int, data: Dataset | None = None) -> Splits:
    """Split with the run seed and standardize every split with train-split statistics."""
    ds = data if data is not None else load_dataset(config)
    train, val, test = split_dataset(ds, config.fractions, seed)
    mean = train.features.mean(axis=0)
    std = train.features.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    scale = lambda part: part.with_features((part.features - mean) / std)  # noqa: E731
    return Splits(scale(train), scale(val), scale(test))


@dataclass
class TrainResult:
    params: ModelParams
    fis_state: fis_ops.FisState | None
    loss_curve: list[float]
    scaled_loss_curve: list[float]
    val_auc_curve: list[float | None]
    best_epoch: int
    flags: list[str] = field(default_factory=list)


def _positive_scores(params: ModelParams, x: np.ndarray) -> np.ndarray:
    probs = predict_proba(params, x)
    return probs[:, 1] if probs.shape[1] == 2 else probs


def _val_auc(params: ModelParams, val: Dataset) -> float | None:
    if len(val) == 0:
        return None
    scores = _positive_scores(params, val.features)
    try:
        if scores.ndim == 1:
            return auc(scores, val.labels)
        return float(
            np.mean([auc(scores[:, k], (val.labels == k).astype(int)) for k in range(scores.shape[1])])
        )
    except UndefinedMetricError:
        return None


def train(config: ExperimentConfig, seed: int, splits: Splits | None = None) -> TrainResult:
    """Mini-batch training with plain (ERM) or FIS-scaled cross-entropy.

    Per FIS step: detached per-sample losses at the current parameters give
    the scaling weights, the weighted loss is backpropagated, the optimizer
    steps, and only then are the group weights and loss memory updated. The
    returned parameters are those of the epoch with the best validation AUC.
    """
    splits = splits or prepare_splits(config, seed)
    tr = splits.train
    init_rng = np.random.default_rng([seed, 1])
    shuffle_rng = np.random.default_rng([seed, 2])
    params = init_params(tr.feature_dim, tr.num_classes, config.arch, config.hidden, init_rng)
    opt = OptimizerState.fresh(
        params, lr=config.lr, betas=config.betas, weight_decay=config.weight_decay, eps=config.eps
    )
    state = None
    if config.method == "fis":
        state = fis_ops.FisState.initial(
            tr.num_groups,
            c=config.c,
            tau=config.tau,
            beta_lr=config.beta_lr,
            memory_mode=config.memory_mode,
            detach=config.detach,
        )

    result = TrainResult(params, state, [], [], [], best_epoch=0)
    best_auc = -np.inf
    n = len(tr)
    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n)
        plain_sum = scaled_sum = 0.0
        for step, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start : start + config.batch_size]
            x, y, g, ids = tr.features[idx], tr.labels[idx], tr.groups[idx], tr.ids[idx]
            losses = per_sample_ce(forward(params, x), y)
            if not np.all(np.isfinite(losses)):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, step {step} (seed {seed}, method {config.method})"
                )
            if state is None:
                coef = weights = np.ones(len(idx))
            else:
                prev, live = fis_ops.prior_losses(state, ids, losses)
                weights = fis_ops.batch_softmax_weights(
                    fis_ops.scaling_scores(state, g, prev), state.tau
                )
                coef = (
                    weights
                    if state.detach
                    else fis_ops.gradient_coefficients(state, weights, losses, live)
                )
            grads = backward(params, x, y, coef, allow_negative=state is not None and not state.detach)
            params, opt = optimizer_step(params, grads, opt)
            if state is not None:
                state = fis_ops.update_beta(state, g, losses)
                state = fis_ops.update_loss_memory(state, ids, losses, copy=False)
            plain_sum += float(losses.sum())
            scaled_sum += float(np.dot(weights, losses))
        result.loss_curve.append(plain_sum / n)
        result.scaled_loss_curve.append(scaled_sum / n)

        val = _val_auc(params, splits.val) if config.select_on_validation else None
        result.val_auc_curve.append(val)
        if not config.select_on_validation or val is None:
            if config.select_on_validation and "validation_auc_undefined" not in result.flags:
                result.flags.append("validation_auc_undefined")
            result.params, result.best_epoch = params, epoch
        elif val > best_auc:
            best_auc = val
            result.params, result.best_epoch = params, epoch
    result.fis_state = state
    if config.select_on_validation and config.epochs:
        result.flags.append(f"model_selection:best_validation_auc_epoch_{result.best_epoch}")
    return result


def eval_set(params: ModelParams, ds: Dataset, threshold: float = 0.5) -> EvalSet:
    return EvalSet(
        scores=_positive_scores(params, ds.features),
        labels=ds.labels,
        groups=ds.groups,
        num_groups=ds.num_groups,
        threshold=threshold,
        group_names=ds.group_names,
        sample_ids=ds.ids,
    )


def evaluate(params: ModelParams, ds: Dataset, threshold: float = 0.5) -> MetricsReport:
    return full_report(eval_set(params, ds, threshold))


def run_seed(
    config: ExperimentConfig,
    seed: int,
    outdir: str | Path | None = None,
    data: Dataset | None = None,
) -> dict[str, Any]:
    """Train and evaluate one seed; optionally write run JSON, checkpoint and test predictions."""
    t0 = time.perf_counter()
    splits = prepare_splits(config, seed, data)
    res = train(config, seed, splits)
    val_report = evaluate(res.params, splits.val, config.threshold)
    test_report = evaluate(res.params, splits.test, config.threshold)
    record = {
        "seed": seed,
        "method": config.method,
        "best_epoch": res.best_epoch,
        "flags": res.flags,
        "validation": val_report.to_dict(),
        "test": test_report.to_dict(),
        "beta": None if res.fis_state is None else [float(b) for b in res.fis_state.beta],
        "fis_state": None if res.fis_state is None else res.fis_state.to_dict(),
        "loss_curve": res.loss_curve,
        "scaled_loss_curve": res.scaled_loss_curve,
        "val_auc_curve": res.val_auc_curve,
        "duration_s": time.perf_counter() - t0,
    }
    if outdir is not None:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"run_{seed}.json").write_text(json.dumps(record, indent=2) + "\n")
        save_checkpoint(res.params, out / f"checkpoint_{seed}.npz")
        write_predictions_csv(
            eval_set(res.params, splits.test, config.threshold), out / f"predictions_test_{seed}.csv"
        )
    return record


def _metric_keys(records: Sequence[Mapping[str, Any]], split: str) -> list[str]:
    keys: list[str] = []
    for rec in records:
        for k in MetricsReport.from_dict(rec[split]).metric_values():
            if k not in keys:
                keys.append(k)
    return keys


def aggregate(records: Sequence[Mapping[str, Any]], split: str = "test") -> dict[str, Any]:
    """Mean and population standard deviation of every metric across seed records."""
    out: dict[str, Any] = {}
    for key in _metric_keys(records, split):
        vals = [rec[split].get(key) for rec in records]
        vals = [v for v in vals if v is not None]
        out[f"{key}_mean"] = float(np.mean(vals)) if vals else None
        out[f"{key}_std"] = float(np.std(vals)) if vals else None
        out[f"{key}_n"] = len(vals)
    return out


def _map_seeds(config: ExperimentConfig, outdir: Path | None, jobs: int, data: Dataset | None):
    if jobs > 1 and len(config.seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run_seed, config, s, outdir, data) for s in config.seeds]
            return [f.result() for f in futures]
    return [run_seed(config, s, outdir, data) for s in config.seeds]


def run_experiment(
    config: ExperimentConfig,
    outdir: str | Path | None = None,
    jobs: int = 1,
    data: Dataset | None = None,
) -> dict[str, Any]:
    """Every seed of one configuration, plus validation/test aggregates."""
    t0 = time.perf_counter()
    data = data if data is not None else load_dataset(config)
    out = Path(outdir) if outdir is not None else None
    records = _map_seeds(config, out, jobs, data)
    run_record = {
        "config": config.to_dict(),
        "runs": records,
        "aggregate": {"validation": aggregate(records, "validation"), "test": aggregate(records, "test")},
        "beta": {str(r["seed"]): r["beta"] for r in records},
        "duration_s": time.perf_counter() - t0,
    }
    if out is not None:
        (out / "run_record.json").write_text(json.dumps(run_record, indent=2) + "\n")
    return run_record


COMPARISON_METRICS = ("overall_auc", "mean_psd", "max_psd", "dpd", "deo", "deodds")

DEFAULT_METHODS: Mapping[str, Mapping[str, Any]] = {"erm": {"method": "erm"}, "fis": {"method": "fis"}}


def _table_row(name: str, run_record: Mapping[str, Any]) -> dict[str, Any]:
    agg = run_record["aggregate"]["test"]
    row: dict[str, Any] = {"method": name, "n_seeds": len(run_record["runs"])}
    metric_names = [k[: -len("_mean")] for k in agg if k.endswith("_mean")]
    for key in metric_names:
        row[f"{key}_mean"] = agg[f"{key}_mean"]
        row[f"{key}_std"] = agg[f"{key}_std"]
    return row


def _mark_best(rows: list[dict[str, Any]]) -> None:
    def pick(key: str, better) -> set[int]:
        vals = [(i, r.get(f"{key}_mean")) for i, r in enumerate(rows)]
        vals = [(i, v) for i, v in vals if v is not None]
        if not vals:
            return set()
        target = better(v for _, v in vals)
        return {i for i, v in vals if v == target}

    best = {"overall_auc": pick("overall_auc", max)}
    for key in ("mean_psd", "max_psd"):
        best[key] = pick(key, min)
    for i, row in enumerate(rows):
        row["best"] = ";".join(k for k, winners in best.items() if i in winners)


def write_rows_csv(rows: Sequence[Mapping[str, Any]], path: str | Path) -> Path:
    path = Path(path)
    header: list[str] = []
    for row in rows:
        header.extend(k for k in row if k not in header)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            cells = []
            for k in header:
                v = row.get(k)
                cells.append("" if v is None else repr(v) if isinstance(v, float) else str(v))
            writer.writerow(cells)
    return path


def compare(
    config: ExperimentConfig,
    methods: Mapping[str, Mapping[str, Any]] = DEFAULT_METHODS,
    outdir: str | Path | None = None,
    jobs: int = 1,
) -> dict[str, Any]:
    """Run each named method variant over all seeds and tabulate test mean/std per metric.

    ``methods`` maps a row name to config overrides. Writes
    ``comparison.csv``/``comparison.json`` plus per-method run directories
    when ``outdir`` is given.
    """
    data = load_dataset(config)
    out = Path(outdir) if outdir is not None else None
    rows, records = [], {}
    for name, overrides in methods.items():
        cfg = config.with_overrides(**overrides)
        rec = run_experiment(cfg, out / name if out else None, jobs, data)
        records[name] = rec
        rows.append(_table_row(name, rec))
    _mark_best(rows)
    table = {"rows": rows, "records": records}
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_rows_csv(rows, out / "comparison.csv")
        (out / "comparison.json").write_text(json.dumps(rows, indent=2) + "\n")
    return table


SWEEP_PARAMS = ("c", "tau")


def sweep(
    config: ExperimentConfig,
    param: str,
    values: Sequence[float],
    outdir: str | Path | None = None,
    jobs: int = 1,
) -> list[dict[str, Any]]:
    """FIS runs over a grid of ``c`` or ``tau``; one row per grid value, sorted by value."""
    if param not in SWEEP_PARAMS:
        raise ValueError(f"sweep parameter must be one of {SWEEP_PARAMS}")
    if not values:
        raise ValueError("sweep needs at least one value")
    data = load_dataset(config)
    out = Path(outdir) if outdir is not None else None
    rows = []
    for value in sorted(float(v) for v in values):
        cfg = config.with_overrides(method="fis", **{param: value})
        rec = run_experiment(cfg, out / f"{param}_{value:g}" if out else None, jobs, data)
        agg = rec["aggregate"]["test"]
        row: dict[str, Any] = {param: value, "n_seeds": len(rec["runs"])}
        for key in ("overall_auc", "mean_psd", "max_psd"):
            row[f"{key}_mean"] = agg[f"{key}_mean"]
            row[f"{key}_std"] = agg[f"{key}_std"]
        rows.append(row)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_rows_csv(rows, out / "sweep.csv")
    return rows


def sweep_c(config: ExperimentConfig, values: Sequence[float] = (0.0, 0.25, 0.5, 0.75, 1.0), **kw):
    if any(not 0.0 <= v <= 1.0 for v in values):
        raise ValueError("c values must lie in [0, 1]")
    return sweep(config, "c", values, **kw)


def sweep_tau(config: ExperimentConfig, values: Sequence[float], **kw):
    return sweep(config, "tau", values, **kw)
