"""Synthetic group-biased data and tabular/JSONL interchange.

CSV dialect: comma separated, header row, '.' decimal point, UTF-8.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from fairscaling.core import Dataset
from fairscaling.metrics import EvalSet

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SynthConfig:
    """Per-group Gaussian class-conditional data.

    Within group ``g`` the two class means sit at ``+/- class_separation[g] / 2``
    along one shared unit direction, with identity covariance, so smaller
    separations make a group intrinsically harder. ``label_noise[g]`` is the
    probability of flipping a label after the features are drawn.

    ``direction_tilt[g]`` (degrees, default 0) rotates group ``g``'s class
    direction away from the shared one, inside a fixed plane. With no tilt
    every group's best ranking direction is the same, so a group's AUC gap is
    irreducible; a tilt makes groups compete for the classifier.
    """

    feature_dim: int = 8
    num_groups: int = 2
    group_proportions: tuple[float, ...] = (0.8, 0.2)
    positive_rate: tuple[float, ...] = (0.5, 0.5)
    class_separation: tuple[float, ...] = (3.0, 0.5)
    label_noise: tuple[float, ...] = (0.0, 0.0)
    direction_tilt: tuple[float, ...] = ()
    n_samples: int = 10_000
    seed: int = 0
    group_names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        for name in ("group_proportions", "positive_rate", "class_separation", "label_noise"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        object.__setattr__(self, "group_names", tuple(self.group_names))
        tilt = tuple(float(t) for t in self.direction_tilt) or (0.0,) * self.num_groups
        object.__setattr__(self, "direction_tilt", tilt)
        self.validate()

    def validate(self) -> None:
        g = self.num_groups
        if self.feature_dim < 1 or g < 1:
            raise ValueError("feature_dim and num_groups must be >= 1")
        for name in (
            "group_proportions",
            "positive_rate",
            "class_separation",
            "label_noise",
            "direction_tilt",
        ):
            if len(getattr(self, name)) != g:
                raise ValueError(f"{name} must have {g} entries")
        if self.group_names and len(self.group_names) != g:
            raise ValueError(f"group_names must have {g} entries")
        if any(p < 0 for p in self.group_proportions) or abs(
            math.fsum(self.group_proportions) - 1.0
        ) > 1e-9:
            raise ValueError("group_proportions must be non-negative and sum to 1")
        if any(not 0 < r < 1 for r in self.positive_rate):
            raise ValueError("positive_rate entries must lie in (0, 1)")
        if any(not s > 0 for s in self.class_separation):
            raise ValueError("class_separation entries must be > 0")
        if any(not 0 <= q <= 0.5 for q in self.label_noise):
            raise ValueError("label_noise entries must lie in [0, 0.5]")
        if self.feature_dim < 2 and any(t != 0 for t in self.direction_tilt):
            raise ValueError("direction_tilt needs feature_dim >= 2")
        if self.n_samples < 10 * g:
            raise ValueError(f"n_samples must be >= {10 * g}")

    def to_dict(self) -> dict[str, Any]:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> SynthConfig:
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in data.items()})


def signal_direction(dim: int) -> np.ndarray:
    """The shared class direction ``(1, ..., 1) / sqrt(dim)``."""
    return np.full(dim, 1.0 / math.sqrt(dim))


def tilt_direction(dim: int) -> np.ndarray:
    """Unit vector orthogonal to :func:`signal_direction`: the first basis vector minus its projection."""
    u = signal_direction(dim)
    v = np.zeros(dim)
    v[0] = 1.0
    v -= v @ u * u
    return v / np.linalg.norm(v)


def group_directions(cfg: SynthConfig) -> np.ndarray:
    """``(G, d)`` unit class directions after applying each group's tilt."""
    u = signal_direction(cfg.feature_dim)
    angles = np.radians(np.asarray(cfg.direction_tilt))
    if not np.any(angles):
        return np.tile(u, (cfg.num_groups, 1))
    v = tilt_direction(cfg.feature_dim)
    return np.cos(angles)[:, None] * u + np.sin(angles)[:, None] * v


def generate_synthetic(cfg: SynthConfig) -> Dataset:
    rng = np.random.default_rng(cfg.seed)
    n, d = cfg.n_samples, cfg.feature_dim
    groups = rng.choice(cfg.num_groups, size=n, p=np.asarray(cfg.group_proportions))
    pos_rate = np.asarray(cfg.positive_rate)[groups]
    labels = (rng.random(n) < pos_rate).astype(np.int64)
    half_sep = np.asarray(cfg.class_separation)[groups] / 2.0
    sign = 2.0 * labels - 1.0
    features = rng.standard_normal((n, d)) + (sign * half_sep)[:, None] * group_directions(cfg)[groups]
    flip = rng.random(n) < np.asarray(cfg.label_noise)[groups]
    labels = np.where(flip, 1 - labels, labels)
    ds = Dataset(
        ids=np.arange(n),
        features=features,
        labels=labels,
        groups=groups,
        num_classes=2,
        num_groups=cfg.num_groups,
        group_names=cfg.group_names,
    )
    ds.require_all_groups()
    return ds


@dataclass(frozen=True)
class TabularSchema:
    """Column roles in a CSV file. ``id_column`` is optional; row order supplies ids otherwise."""

    feature_columns: tuple[str, ...]
    label_column: str
    group_column: str
    id_column: str | None = None
    group_names: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict[str, Any]:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


def _dense_codes(values: Sequence[str], what: str) -> tuple[list[int], tuple[str, ...]]:
    """Integer columns 0..K-1 are kept as-is; anything else is coded by first appearance."""
    try:
        ints = [int(v) for v in values]
    except ValueError:
        ints = None
    if ints is not None and ints and min(ints) >= 0:
        k = max(ints) + 1
        if set(ints) == set(range(k)):
            return ints, tuple(str(i) for i in range(k))
    table: dict[str, int] = {}
    for v in values:
        table.setdefault(v, len(table))
    logger.info("%s column coded by first appearance: %s", what, table)
    return [table[v] for v in values], tuple(table)


def load_tabular(path: str | Path, schema: TabularSchema) -> Dataset:
    """Read a CSV into a :class:`Dataset`.

    Rows with an empty cell in any used column are skipped and their
    (1-based, header = row 1) numbers logged as a warning.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if not header:
            raise ValueError(f"{path}: empty file")
        used = [*schema.feature_columns, schema.label_column, schema.group_column]
        if schema.id_column:
            used.append(schema.id_column)
        missing = [c for c in used if c not in header]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        rows, skipped = [], []
        for rownum, row in enumerate(reader, start=2):
            if any(row.get(c) is None or row[c].strip() == "" for c in used):
                skipped.append(rownum)
                continue
            rows.append((rownum, row))
    if skipped:
        logger.warning("%s: skipped rows with missing values: %s", path, skipped)
    if not rows:
        raise ValueError(f"{path}: no data rows")

    features = np.empty((len(rows), len(schema.feature_columns)))
    for i, (rownum, row) in enumerate(rows):
        for j, col in enumerate(schema.feature_columns):
            try:
                features[i, j] = float(row[col])
            except ValueError:
                raise ValueError(
                    f"{path}: row {rownum}, column {col!r}: cannot parse {row[col]!r} as a number"
                ) from None
    if schema.id_column:
        try:
            ids = [int(row[schema.id_column]) for _, row in rows]
        except ValueError as exc:
            raise ValueError(f"{path}: id column {schema.id_column!r}: {exc}") from None
    else:
        ids = [rownum - 2 for rownum, _ in rows]
    labels, label_names = _dense_codes([row[schema.label_column].strip() for _, row in rows], "label")
    groups, group_names = _dense_codes([row[schema.group_column].strip() for _, row in rows], "group")
    if schema.group_names:
        if len(schema.group_names) < len(group_names):
            raise ValueError("schema.group_names has fewer entries than distinct groups")
        group_names = tuple(schema.group_names)
    ds = Dataset(
        ids=np.array(ids),
        features=features,
        labels=np.array(labels),
        groups=np.array(groups),
        num_classes=max(2, len(label_names)),
        num_groups=len(group_names),
        group_names=group_names,
        label_names=label_names if len(label_names) >= 2 else (),
    )
    return ds


def write_csv(ds: Dataset, path: str | Path) -> Path:
    """Columns ``id, x0..x{d-1}, label, group``; floats in shortest round-trip form."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", *(f"x{j}" for j in range(ds.feature_dim)), "label", "group"])
        for sid, x, y, a in zip(ds.ids, ds.features, ds.labels, ds.groups):
            writer.writerow([int(sid), *(repr(float(v)) for v in x), int(y), int(a)])
    return path


def csv_schema_for(ds: Dataset) -> TabularSchema:
    return TabularSchema(
        feature_columns=tuple(f"x{j}" for j in range(ds.feature_dim)),
        label_column="label",
        group_column="group",
        id_column="id",
        group_names=ds.group_names,
    )


def write_jsonl(ds: Dataset, path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for sid, x, y, a in zip(ds.ids, ds.features, ds.labels, ds.groups):
            rec = {"id": int(sid), "features": [float(v) for v in x], "label": int(y), "group": int(a)}
            fh.write(json.dumps(rec) + "\n")
    return path


def read_jsonl(
    path: str | Path,
    num_classes: int | None = None,
    num_groups: int | None = None,
    group_names: Sequence[str] = (),
) -> Dataset:
    path = Path(path)
    ids, feats, labels, groups = [], [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                ids.append(int(rec["id"]))
                feats.append([float(v) for v in rec["features"]])
                labels.append(int(rec["label"]))
                groups.append(int(rec["group"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
    if not ids:
        raise ValueError(f"{path}: empty file")
    if len({len(f) for f in feats}) != 1:
        raise ValueError(f"{path}: inconsistent feature dimension")
    return Dataset(
        ids=np.array(ids),
        features=np.array(feats),
        labels=np.array(labels),
        groups=np.array(groups),
        num_classes=num_classes or max(2, max(labels) + 1),
        num_groups=num_groups or max(groups) + 1,
        group_names=tuple(group_names),
    )


def write_predictions_csv(ev: EvalSet, path: str | Path) -> Path:
    """Columns ``sample_id, group, label`` then ``score`` (binary) or ``score_0..score_{K-1}``."""
    path = Path(path)
    ids = ev.sample_ids if ev.sample_ids is not None else np.arange(len(ev.labels))
    score_cols = (
        [f"score_{k}" for k in range(ev.scores.shape[1])] if ev.is_multiclass else ["score"]
    )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "group", "label", *score_cols])
        scores = ev.scores if ev.is_multiclass else ev.scores[:, None]
        for sid, g, y, s in zip(ids, ev.groups, ev.labels, scores):
            writer.writerow([int(sid), int(g), int(y), *(repr(float(v)) for v in s)])
    return path


def read_predictions_csv(
    path: str | Path,
    threshold: float = 0.5,
    num_groups: int | None = None,
    group_names: Sequence[str] = (),
) -> EvalSet:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in ("sample_id", "group", "label"):
            if col not in header:
                raise ValueError(f"{path}: missing column {col!r}")
        score_cols = sorted(
            (c for c in header if c.startswith("score_")), key=lambda c: int(c.split("_")[1])
        )
        if not score_cols:
            if "score" not in header:
                raise ValueError(f"{path}: no score column")
            score_cols = ["score"]
        ids, groups, labels, scores = [], [], [], []
        for rownum, row in enumerate(reader, start=2):
            try:
                ids.append(int(row["sample_id"]))
                groups.append(int(row["group"]))
                labels.append(int(row["label"]))
                scores.append([float(row[c]) for c in score_cols])
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}: row {rownum}: {exc}") from None
    if not ids:
        raise ValueError(f"{path}: empty file")
    arr = np.array(scores)
    return EvalSet(
        scores=arr[:, 0] if arr.shape[1] == 1 else arr,
        labels=np.array(labels),
        groups=np.array(groups),
        num_groups=num_groups or max(groups) + 1,
        threshold=threshold,
        group_names=tuple(group_names),
        sample_ids=np.array(ids),
    )
