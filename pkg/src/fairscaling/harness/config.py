"""Declarative experiment configuration.

A config file is a JSON object with the keys of :class:`ExperimentConfig`.
``synth`` is a nested object with the :class:`~fairscaling.data_io.SynthConfig`
keys and ``schema`` a nested object with the
:class:`~fairscaling.data_io.TabularSchema` keys; set ``data_path`` plus
``schema`` to train on a CSV file instead of synthetic data. Example::

    {
      "method": "fis", "c": 0.5, "tau": 1.0,
      "epochs": 10, "lr": 1e-4, "batch_size": 10,
      "seeds": [0, 1, 2],
      "synth": {"class_separation": [3.0, 0.5], "group_proportions": [0.8, 0.2]}
    }
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

from fairscaling.data_io import SynthConfig, TabularSchema
from fairscaling.fis import MEMORY_MODES
from fairscaling.model import ARCHITECTURES

METHODS = ("erm", "fis")


def disparity_testbed(seed: int = 0, n_samples: int = 10_000) -> SynthConfig:
    """Two groups, 80/20, class separation 3.0 for the majority and 0.5 for the minority.

    The minority's class direction is tilted 90 degrees from the majority's,
    so a classifier fitted mostly to the majority under-serves it.
    """
    return SynthConfig(
        feature_dim=8,
        num_groups=2,
        group_proportions=(0.8, 0.2),
        positive_rate=(0.5, 0.5),
        class_separation=(3.0, 0.5),
        label_noise=(0.0, 0.0),
        direction_tilt=(0.0, 90.0),
        n_samples=n_samples,
        seed=seed,
        group_names=("majority", "minority"),
    )


@dataclass(frozen=True)
class ExperimentConfig:
    synth: SynthConfig | None = field(default_factory=disparity_testbed)
    data_path: str | None = None
    schema: TabularSchema | None = None
    fractions: tuple[float, float, float] = (0.6, 0.1, 0.3)
    arch: str = "mlp"
    hidden: int = 32
    lr: float = 1e-4
    epochs: int = 10
    batch_size: int = 10
    weight_decay: float = 0.0
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    method: str = "fis"
    c: float = 0.5
    tau: float = 1.0
    beta_lr: float = 0.01
    memory_mode: str = "memory"
    detach: bool = True
    select_on_validation: bool = True
    threshold: float = 0.5
    seeds: tuple[int, ...] = (0, 1, 2)
    outdir: str = "runs"

    def __post_init__(self) -> None:
        if isinstance(self.synth, Mapping):
            object.__setattr__(self, "synth", synth_config(self.synth))
        if isinstance(self.schema, Mapping):
            object.__setattr__(self, "schema", _schema(self.schema))
        object.__setattr__(self, "fractions", tuple(float(f) for f in self.fractions))
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        self.validate()

    def validate(self) -> None:
        if self.data_path is None and self.synth is None:
            raise ValueError("config needs either synth or data_path")
        if self.data_path is not None and self.schema is None:
            raise ValueError("data_path requires a schema")
        if len(self.fractions) != 3 or any(not f > 0 for f in self.fractions):
            raise ValueError("fractions must be three positive numbers")
        if abs(math.fsum(self.fractions) - 1.0) > 1e-9:
            raise ValueError("fractions must sum to 1")
        if self.arch not in ARCHITECTURES:
            raise ValueError(f"arch must be one of {ARCHITECTURES}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.memory_mode not in MEMORY_MODES:
            raise ValueError(f"memory_mode must be one of {MEMORY_MODES}")
        if not 0.0 <= self.c <= 1.0:
            raise ValueError("c must lie in [0, 1]")
        if not self.tau > 0:
            raise ValueError("tau must be > 0")
        if self.epochs < 0 or self.batch_size < 1 or self.hidden < 1:
            raise ValueError("epochs >= 0, batch_size >= 1 and hidden >= 1 are required")
        if not self.lr > 0 or self.weight_decay < 0 or self.beta_lr < 0:
            raise ValueError("lr must be > 0; weight_decay and beta_lr must be >= 0")
        if not self.seeds:
            raise ValueError("at least one seed is required")

    def with_overrides(self, **changes: Any) -> ExperimentConfig:
        return replace(self, **_coerce(changes))

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (SynthConfig, TabularSchema)):
                v = v.to_dict()
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ExperimentConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**_coerce(dict(data)))

    @classmethod
    def from_file(cls, path: str | Path) -> ExperimentConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))


def synth_config(overrides: Mapping[str, Any]) -> SynthConfig:
    """The disparity testbed with ``overrides`` applied.

    Per-group testbed values are replaced by neutral ones when the overrides
    change the number of groups without supplying them.
    """
    given = dict(overrides)
    base = asdict(disparity_testbed())
    g = int(given.get("num_groups", base["num_groups"]))
    if g != base["num_groups"]:
        base.update(
            group_proportions=[1.0 / g] * g,
            positive_rate=[0.5] * g,
            class_separation=[1.0] * g,
            label_noise=[0.0] * g,
            direction_tilt=[0.0] * g,
            group_names=[],
        )
    base.update(given)
    return SynthConfig.from_dict(base)


def _schema(data: Mapping[str, Any]) -> TabularSchema:
    schema = dict(data)
    for key in ("feature_columns", "group_names"):
        if key in schema:
            schema[key] = tuple(schema[key])
    return TabularSchema(**schema)


def _coerce(data: dict[str, Any]) -> dict[str, Any]:
    if isinstance(data.get("synth"), Mapping):
        data["synth"] = synth_config(data["synth"])
    if isinstance(data.get("schema"), Mapping):
        data["schema"] = _schema(data["schema"])
    if "data_path" in data and data["data_path"] is not None and "synth" not in data:
        data["synth"] = None
    return data
