"""Performance and fairness metrics.

AUC is the Mann-Whitney statistic computed from midranks. The parity
metrics (DPD, DEO, DEOdds) are max-minus-min spreads of per-group rates
after thresholding. The performance-scaled disparities express the spread
of group AUCs as a percentage of the overall AUC:

    mean PSD = 100 * pstdev(group AUCs) / overall AUC
    max PSD  = 100 * (max - min of group AUCs) / overall AUC

Multiclass scores (one probability column per class) are reduced one-vs-rest:
AUCs are macro averages over classes and the parity metrics are computed on
argmax predictions per class, then macro averaged.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from fairscaling.core import MetricsReport, ScoredPrediction


class UndefinedMetricError(ValueError):
    """A metric has no value on the given data (e.g. AUC with one class only)."""


def midranks(values: ArrayLike) -> NDArray[np.float64]:
    """1-based ranks; tied values share the mean of the ranks they span."""
    v = np.asarray(values, dtype=np.float64)
    _, inverse, counts = np.unique(v, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    mid = ends - (counts - 1) / 2.0
    return mid[inverse.reshape(-1)]


def auc(scores: ArrayLike, labels: ArrayLike) -> float:
    """ROC AUC via the rank-sum form of the Mann-Whitney U statistic; ties earn half credit."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.shape != y.shape:
        raise ValueError("scores and labels must have equal length")
    if not np.all(np.isin(y, (0, 1))):
        raise ValueError("labels must be 0 or 1")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("undefined AUC: need at least one positive and one negative")
    rank_sum = float(midranks(s)[pos].sum())
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


@dataclass(frozen=True, eq=False)
class EvalSet:
    """Scored predictions with their labels and groups.

    ``scores`` is ``(n,)`` positive-class probabilities for binary tasks or
    ``(n, K)`` class probabilities. Binary predictions are
    ``score >= threshold``.
    """

    scores: NDArray[np.float64]
    labels: NDArray[np.int64]
    groups: NDArray[np.int64]
    num_groups: int
    threshold: float = 0.5
    group_names: tuple[str, ...] = ()
    sample_ids: NDArray[np.int64] | None = None

    def __post_init__(self) -> None:
        scores = np.asarray(self.scores, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        groups = np.asarray(self.groups, dtype=np.int64).reshape(-1)
        if scores.ndim == 2 and scores.shape[1] == 1:
            scores = scores[:, 0]
        if scores.shape[0] != labels.size or groups.size != labels.size:
            raise ValueError("scores, labels and groups must have equal length")
        if labels.size == 0:
            raise ValueError("evaluation set is empty")
        if groups.min() < 0 or groups.max() >= self.num_groups:
            raise ValueError(f"group indices must lie in [0, {self.num_groups})")
        if scores.ndim == 1:
            if np.any((scores < 0) | (scores > 1)) or not np.all(np.isin(labels, (0, 1))):
                raise ValueError("binary scores must lie in [0, 1] with labels in {0, 1}")
        elif scores.ndim == 2:
            if np.any(np.abs(scores.sum(axis=1) - 1.0) > 1e-9):
                raise ValueError("class probabilities must sum to 1")
            if labels.min() < 0 or labels.max() >= scores.shape[1]:
                raise ValueError("labels out of range for the probability columns")
        else:
            raise ValueError("scores must be 1-D or 2-D")
        names = tuple(self.group_names) or tuple(f"g{g}" for g in range(self.num_groups))
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "group_names", names)
        if self.sample_ids is not None:
            object.__setattr__(self, "sample_ids", np.asarray(self.sample_ids, dtype=np.int64))

    @classmethod
    def from_predictions(
        cls,
        predictions: Iterable[ScoredPrediction],
        num_groups: int,
        threshold: float = 0.5,
        group_names: Sequence[str] = (),
    ) -> EvalSet:
        preds = list(predictions)
        return cls(
            scores=np.array([p.score for p in preds], dtype=np.float64),
            labels=np.array([p.label for p in preds]),
            groups=np.array([p.group for p in preds]),
            num_groups=num_groups,
            threshold=threshold,
            group_names=tuple(group_names),
            sample_ids=np.array([p.sample_id for p in preds]),
        )

    @property
    def is_multiclass(self) -> bool:
        return self.scores.ndim == 2

    def binary_views(self) -> list[tuple[NDArray, NDArray, NDArray]]:
        """``(score, label01, prediction01)`` triples: one, or one per class."""
        if not self.is_multiclass:
            return [(self.scores, self.labels, (self.scores >= self.threshold).astype(np.int64))]
        pred = np.argmax(self.scores, axis=1)
        return [
            (self.scores[:, k], (self.labels == k).astype(np.int64), (pred == k).astype(np.int64))
            for k in range(self.scores.shape[1])
        ]

    def group_mask(self, g: int) -> NDArray[np.bool_]:
        return self.groups == g


def _macro_auc(ev: EvalSet, mask: NDArray[np.bool_] | None = None) -> float:
    values = []
    for score, y, _ in ev.binary_views():
        if mask is not None:
            score, y = score[mask], y[mask]
        try:
            values.append(auc(score, y))
        except UndefinedMetricError:
            if not ev.is_multiclass:
                raise
    if not values:
        raise UndefinedMetricError("undefined AUC: no class has both positives and negatives")
    return float(np.mean(values))


def overall_auc(ev: EvalSet) -> float:
    return _macro_auc(ev)


def group_auc(ev: EvalSet) -> dict[int, float | None]:
    """AUC within each group; ``None`` where the group lacks a positive or a negative."""
    out: dict[int, float | None] = {}
    for g in range(ev.num_groups):
        mask = ev.group_mask(g)
        try:
            out[g] = _macro_auc(ev, mask) if mask.any() else None
        except UndefinedMetricError:
            out[g] = None
    return out


def _check_psd_inputs(group_perfs: ArrayLike, overall: float) -> NDArray[np.float64]:
    perfs = np.asarray(group_perfs, dtype=np.float64).reshape(-1)
    if perfs.size < 2:
        raise ValueError("performance-scaled disparity needs at least two groups")
    if not overall > 0:
        raise ValueError(f"overall performance must be > 0, got {overall}")
    return perfs


def mean_psd(group_perfs: ArrayLike, overall: float) -> float:
    """100 * population standard deviation of group performance / overall performance."""
    perfs = _check_psd_inputs(group_perfs, overall)
    # centering on one member keeps equal values at exactly zero spread
    return float(100.0 * np.std(perfs - perfs[0]) / overall)


def max_psd(group_perfs: ArrayLike, overall: float) -> float:
    """100 * (best - worst group performance) / overall performance."""
    perfs = _check_psd_inputs(group_perfs, overall)
    return float(100.0 * (perfs.max() - perfs.min()) / overall)


def _rates(
    ev: EvalSet, view: tuple[NDArray, NDArray, NDArray], kind: str
) -> dict[int, float | None]:
    _, y, pred = view
    out: dict[int, float | None] = {}
    for g in range(ev.num_groups):
        mask = ev.group_mask(g)
        if kind == "selection":
            base = mask
        elif kind == "tpr":
            base = mask & (y == 1)
        else:
            base = mask & (y == 0)
        n = int(base.sum())
        out[g] = float(pred[base].sum() / n) if n else None
    return out


def _spread(rates: Mapping[int, float | None], what: str, skip_undefined: bool) -> float:
    undefined = [g for g, r in rates.items() if r is None]
    if undefined and not skip_undefined:
        raise UndefinedMetricError(f"{what} undefined for groups {undefined}")
    defined = [r for r in rates.values() if r is not None]
    if not defined:
        raise UndefinedMetricError(f"{what} undefined for every group")
    return max(defined) - min(defined)


def _macro(ev: EvalSet, kinds: Sequence[tuple[str, str]], skip_undefined: bool) -> float:
    per_view = []
    for view in ev.binary_views():
        spreads = []
        for kind, what in kinds:
            try:
                spreads.append(_spread(_rates(ev, view, kind), what, skip_undefined))
            except UndefinedMetricError:
                if not ev.is_multiclass:
                    raise
        if spreads and len(spreads) == len(kinds):
            per_view.append(max(spreads))
    if not per_view:
        raise UndefinedMetricError(f"{kinds[0][1]} undefined for every class")
    return float(np.mean(per_view))


def selection_rates(ev: EvalSet) -> dict[int, float | None]:
    return _rates(ev, ev.binary_views()[0], "selection")


def dpd(ev: EvalSet, skip_undefined: bool = False) -> float:
    """Demographic parity difference: spread of group selection rates."""
    return _macro(ev, [("selection", "selection rate")], skip_undefined)


def deo(ev: EvalSet, skip_undefined: bool = False) -> float:
    """Difference in equal opportunity: spread of group true-positive rates."""
    return _macro(ev, [("tpr", "TPR")], skip_undefined)


def deodds(ev: EvalSet, skip_undefined: bool = False) -> float:
    """Difference in equalized odds: the larger of the TPR spread and the FPR spread."""
    return _macro(ev, [("tpr", "TPR"), ("fpr", "FPR")], skip_undefined)


def _undefined_groups(ev: EvalSet, kind: str) -> list[int]:
    bad: set[int] = set()
    for view in ev.binary_views():
        bad.update(g for g, r in _rates(ev, view, kind).items() if r is None)
    return sorted(bad)


def full_report(ev: EvalSet) -> MetricsReport:
    """Every metric at once; a failing metric becomes ``None`` with a flag instead of aborting."""
    flags: list[str] = []
    metadata: dict[str, object] = {"threshold_rule": "score >= threshold"}
    if ev.is_multiclass:
        metadata["multiclass_reduction"] = "macro one-vs-rest AUC; argmax rates macro-averaged"

    try:
        overall: float | None = overall_auc(ev)
    except UndefinedMetricError:
        overall = None
        flags.append("overall_auc_undefined")

    per_group = group_auc(ev)
    flags.extend(f"group_auc_undefined:g{g}" for g, v in per_group.items() if v is None)

    m_psd = x_psd = None
    defined = [v for v in per_group.values() if v is not None]
    if overall is None or overall <= 0:
        flags.append("psd_undefined:no_overall_auc")
    elif len(defined) < 2:
        flags.append("psd_undefined:fewer_than_two_groups")
    else:
        m_psd = mean_psd(defined, overall)
        x_psd = max_psd(defined, overall)

    parity: dict[str, float | None] = {}
    for name, fn, kinds in (
        ("dpd", dpd, ("selection",)),
        ("deo", deo, ("tpr",)),
        ("deodds", deodds, ("tpr", "fpr")),
    ):
        excluded = sorted({g for k in kinds for g in _undefined_groups(ev, k)})
        flags.extend(f"{name}_excluded:g{g}" for g in excluded)
        try:
            parity[name] = fn(ev, skip_undefined=True)
        except UndefinedMetricError:
            parity[name] = None
            flags.append(f"{name}_undefined")

    return MetricsReport(
        overall_auc=overall,
        group_auc=per_group,
        mean_psd=m_psd,
        max_psd=x_psd,
        dpd=parity["dpd"],
        deo=parity["deo"],
        deodds=parity["deodds"],
        threshold_used=ev.threshold,
        flags=tuple(flags),
        group_names=ev.group_names,
        metadata=metadata,
    )


def recompute_psd(report: MetricsReport) -> tuple[float | None, float | None]:
    """Mean and max PSD from the report's own AUC fields."""
    defined = [v for v in report.group_auc.values() if v is not None]
    if report.overall_auc is None or report.overall_auc <= 0 or len(defined) < 2:
        return None, None
    return mean_psd(defined, report.overall_auc), max_psd(defined, report.overall_auc)


def write_report_json(report: MetricsReport, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=False) + "\n")
    return path


def write_report_csv(report: MetricsReport, path: str | Path) -> Path:
    """One header row and one value row; column order is fixed by :meth:`MetricsReport.csv_header`."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(report.csv_header())
        writer.writerow(report.csv_row())
    return path
