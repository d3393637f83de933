"""Shared domain model: samples, datasets, scored predictions and reports."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
from numpy.typing import NDArray


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Sample:
    id: int
    features: tuple[float, ...]
    label: int
    group: int


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column-oriented, read-only collection of labelled samples.

    ``ids``, ``features``, ``labels`` and ``groups`` are parallel arrays. A
    dataset produced by a generator or loader covers every group; subsets
    produced by :func:`split_dataset` may not (see :meth:`missing_groups`).
    """

    ids: NDArray[np.int64]
    features: NDArray[np.float64]
    labels: NDArray[np.int64]
    groups: NDArray[np.int64]
    num_classes: int
    num_groups: int
    group_names: tuple[str, ...] = ()
    label_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        ids = np.asarray(self.ids, dtype=np.int64).reshape(-1)
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim == 1:
            feats = feats.reshape(len(ids), -1) if len(ids) else feats.reshape(0, 0)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        groups = np.asarray(self.groups, dtype=np.int64).reshape(-1)
        n = len(ids)
        if feats.ndim != 2 or feats.shape[0] != n or len(labels) != n or len(groups) != n:
            raise ValueError("ids, features, labels and groups must have matching lengths")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.num_groups < 1:
            raise ValueError("num_groups must be >= 1")
        if n:
            if labels.min() < 0 or labels.max() >= self.num_classes:
                raise ValueError(f"labels must lie in [0, {self.num_classes})")
            if groups.min() < 0 or groups.max() >= self.num_groups:
                raise ValueError(f"groups must lie in [0, {self.num_groups})")
            if len(np.unique(ids)) != n:
                raise ValueError("sample ids must be unique")
            if not np.all(np.isfinite(feats)):
                raise ValueError("features must be finite")
        names = tuple(self.group_names) or tuple(f"g{g}" for g in range(self.num_groups))
        if len(names) != self.num_groups:
            raise ValueError("group_names must have one entry per group")
        lnames = tuple(self.label_names) or tuple(str(k) for k in range(self.num_classes))
        if len(lnames) != self.num_classes:
            raise ValueError("label_names must have one entry per class")
        object.__setattr__(self, "ids", _frozen(ids))
        object.__setattr__(self, "features", _frozen(feats))
        object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(self, "groups", _frozen(groups))
        object.__setattr__(self, "group_names", names)
        object.__setattr__(self, "label_names", lnames)

    @classmethod
    def from_samples(
        cls,
        samples: Iterable[Sample],
        num_classes: int,
        num_groups: int,
        group_names: Sequence[str] = (),
        label_names: Sequence[str] = (),
    ) -> Dataset:
        samples = list(samples)
        if samples:
            d = len(samples[0].features)
            if any(len(s.features) != d for s in samples):
                raise ValueError("all samples must share one feature dimension")
            feats = np.array([s.features for s in samples], dtype=np.float64)
        else:
            feats = np.zeros((0, 0))
        return cls(
            ids=np.array([s.id for s in samples], dtype=np.int64),
            features=feats,
            labels=np.array([s.label for s in samples], dtype=np.int64),
            groups=np.array([s.group for s in samples], dtype=np.int64),
            num_classes=num_classes,
            num_groups=num_groups,
            group_names=tuple(group_names),
            label_names=tuple(label_names),
        )

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def samples(self) -> tuple[Sample, ...]:
        return tuple(
            Sample(int(i), tuple(float(v) for v in x), int(y), int(a))
            for i, x, y, a in zip(self.ids, self.features, self.labels, self.groups)
        )

    def missing_groups(self) -> list[int]:
        present = set(np.unique(self.groups).tolist())
        return [g for g in range(self.num_groups) if g not in present]

    def require_all_groups(self) -> None:
        missing = self.missing_groups()
        if missing:
            raise ValueError(f"groups {missing} have no samples")

    def subset(self, index: NDArray[np.int64]) -> Dataset:
        index = np.asarray(index, dtype=np.int64)
        return Dataset(
            ids=self.ids[index],
            features=self.features[index],
            labels=self.labels[index],
            groups=self.groups[index],
            num_classes=self.num_classes,
            num_groups=self.num_groups,
            group_names=self.group_names,
            label_names=self.label_names,
        )

    def with_features(self, features: NDArray[np.float64]) -> Dataset:
        return Dataset(
            ids=self.ids,
            features=features,
            labels=self.labels,
            groups=self.groups,
            num_classes=self.num_classes,
            num_groups=self.num_groups,
            group_names=self.group_names,
            label_names=self.label_names,
        )


def split_dataset(
    ds: Dataset, fractions: Sequence[float] = (0.6, 0.1, 0.3), seed: int = 0
) -> tuple[Dataset, Dataset, Dataset]:
    """Random train/val/test partition.

    Validation and test sizes are ``floor(fraction * N)``; the remainder goes
    to train. Each split keeps the original sample order.
    """
    if len(ds) == 0:
        raise ValueError("cannot split an empty dataset")
    if len(fractions) != 3:
        raise ValueError("fractions must be (train, val, test)")
    if any(not (f > 0) for f in fractions):
        raise ValueError("fractions must be positive")
    if abs(math.fsum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {math.fsum(fractions)!r}")
    n = len(ds)
    # the epsilon absorbs representation error such as 0.3 * 10 = 3.0000000000000004
    n_val = int(math.floor(fractions[1] * n + 1e-9))
    n_test = int(math.floor(fractions[2] * n + 1e-9))
    n_train = n - n_val - n_test
    perm = np.random.default_rng(seed).permutation(n)
    parts = (perm[:n_train], perm[n_train : n_train + n_val], perm[n_train + n_val :])
    return tuple(ds.subset(np.sort(p)) for p in parts)  # type: ignore[return-value]


@dataclass(frozen=True)
class ScoredPrediction:
    """Model output for one sample.

    ``score`` is the positive-class probability for binary tasks, or a
    per-class probability vector when there are more than two classes.
    """

    sample_id: int
    score: float | tuple[float, ...]
    label: int
    group: int

    def __post_init__(self) -> None:
        if isinstance(self.score, (tuple, list, np.ndarray)):
            probs = tuple(float(p) for p in self.score)
            if any(p < 0 or p > 1 for p in probs) or abs(math.fsum(probs) - 1.0) > 1e-9:
                raise ValueError("class probabilities must lie in [0,1] and sum to 1")
            object.__setattr__(self, "score", probs)
        elif not 0.0 <= float(self.score) <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")


@dataclass(frozen=True)
class MetricsReport:
    """Performance and fairness summary of one evaluation.

    AUCs and the parity metrics are fractions in [0, 1]; the PSD metrics are
    percentages. A metric that could not be computed is ``None`` and the
    reason is listed in ``flags``.
    """

    overall_auc: float | None
    group_auc: Mapping[int, float | None]
    mean_psd: float | None
    max_psd: float | None
    dpd: float | None
    deo: float | None
    deodds: float | None
    threshold_used: float
    flags: tuple[str, ...] = ()
    group_names: tuple[str, ...] = ()
    metadata: Mapping[str, Any] = field(default_factory=dict)

    METRIC_FIELDS = ("overall_auc", "mean_psd", "max_psd", "dpd", "deo", "deodds")

    def metric_values(self) -> dict[str, float | None]:
        """Flat scalar view: overall AUC, one ``auc_g<k>`` per group, then the rest."""
        out: dict[str, float | None] = {"overall_auc": self.overall_auc}
        for g in sorted(self.group_auc):
            out[f"auc_g{g}"] = self.group_auc[g]
        for name in ("mean_psd", "max_psd", "dpd", "deo", "deodds"):
            out[name] = getattr(self, name)
        return out

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = self.metric_values()
        out["threshold"] = self.threshold_used
        out["flags"] = list(self.flags)
        out["group_names"] = list(self.group_names)
        out["metadata"] = dict(self.metadata)
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> MetricsReport:
        group_auc = {
            int(k[len("auc_g") :]): v for k, v in data.items() if k.startswith("auc_g")
        }
        return cls(
            overall_auc=data["overall_auc"],
            group_auc=group_auc,
            mean_psd=data["mean_psd"],
            max_psd=data["max_psd"],
            dpd=data["dpd"],
            deo=data["deo"],
            deodds=data["deodds"],
            threshold_used=data["threshold"],
            flags=tuple(data.get("flags", ())),
            group_names=tuple(data.get("group_names", ())),
            metadata=dict(data.get("metadata", {})),
        )

    def csv_header(self) -> list[str]:
        return [*self.metric_values(), "threshold", "flags"]

    def csv_row(self) -> list[str]:
        cells = ["" if v is None else repr(float(v)) for v in self.metric_values().values()]
        return [*cells, repr(float(self.threshold_used)), ";".join(self.flags)]
