"""Small numpy classifier with hand-derived gradients and an AdamW optimizer.

Two architectures are supported:

* ``linear``: ``logits = X @ W1 + b1``
* ``mlp``: ``logits = relu(X @ W1 + b1) @ W2 + b2``

Weight matrices are stored input-major, i.e. ``W1`` has shape ``(d, H)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

ARCHITECTURES = ("linear", "mlp")

Array = NDArray[np.float64]


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Named parameter arrays for one of :data:`ARCHITECTURES`.

    The same container is used for gradients and optimizer moments, which
    keeps every array record shape-congruent with the parameters it tracks.
    """

    arch: str
    arrays: Mapping[str, Array]

    def __post_init__(self) -> None:
        if self.arch not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.arch!r}")
        expected = _param_names(self.arch)
        if tuple(self.arrays) != expected:
            raise ValueError(f"{self.arch} expects arrays {expected}, got {tuple(self.arrays)}")
        arrays = {k: np.asarray(v, dtype=np.float64) for k, v in self.arrays.items()}
        w1, b1 = arrays["W1"], arrays["b1"]
        if w1.ndim != 2 or b1.shape != (w1.shape[1],):
            raise ValueError("W1/b1 shapes are inconsistent")
        if self.arch == "mlp":
            w2, b2 = arrays["W2"], arrays["b2"]
            if w2.ndim != 2 or w2.shape[0] != w1.shape[1] or b2.shape != (w2.shape[1],):
                raise ValueError("W2/b2 shapes are inconsistent")
        object.__setattr__(self, "arrays", arrays)

    def __getitem__(self, name: str) -> Array:
        return self.arrays[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.arrays)

    @property
    def input_dim(self) -> int:
        return self.arrays["W1"].shape[0]

    @property
    def num_classes(self) -> int:
        last = "W2" if self.arch == "mlp" else "W1"
        return self.arrays[last].shape[1]

    @property
    def hidden(self) -> int | None:
        return self.arrays["W1"].shape[1] if self.arch == "mlp" else None

    def map(self, fn) -> ModelParams:
        return ModelParams(self.arch, {k: fn(v) for k, v in self.arrays.items()})

    def zeros_like(self) -> ModelParams:
        return self.map(np.zeros_like)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.arrays.values())

    def flat(self) -> Array:
        return np.concatenate([v.ravel() for v in self.arrays.values()])

    def allclose(self, other: ModelParams, atol: float = 0.0) -> bool:
        return self.arch == other.arch and all(
            np.allclose(self[k], other[k], rtol=0.0, atol=atol) for k in self
        )

    def max_abs_diff(self, other: ModelParams) -> float:
        return max(float(np.max(np.abs(self[k] - other[k]))) for k in self)


Gradients = ModelParams


def _param_names(arch: str) -> tuple[str, ...]:
    return ("W1", "b1", "W2", "b2") if arch == "mlp" else ("W1", "b1")


def init_params(
    input_dim: int,
    num_classes: int,
    arch: str = "mlp",
    hidden: int = 32,
    seed: int | np.random.Generator = 0,
) -> ModelParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization for weights and biases."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if arch not in ARCHITECTURES:
        raise ValueError(f"unknown architecture {arch!r}")
    dims = [input_dim, hidden, num_classes] if arch == "mlp" else [input_dim, num_classes]
    arrays: dict[str, Array] = {}
    for layer, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:]), start=1):
        bound = 1.0 / math.sqrt(fan_in)
        arrays[f"W{layer}"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        arrays[f"b{layer}"] = rng.uniform(-bound, bound, size=fan_out)
    return ModelParams(arch, arrays)


def _check_batch(params: ModelParams, x: ArrayLike) -> Array:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ValueError(
            f"expected a (batch, {params.input_dim}) feature matrix, got shape {x.shape}"
        )
    return x


def forward(params: ModelParams, x: ArrayLike) -> Array:
    """Logits of shape ``(batch, K)``."""
    x = _check_batch(params, x)
    z1 = x @ params["W1"] + params["b1"]
    if params.arch == "linear":
        return z1
    return np.maximum(z1, 0.0) @ params["W2"] + params["b2"]


def softmax(logits: ArrayLike) -> Array:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def predict_proba(params: ModelParams, x: ArrayLike) -> Array:
    return softmax(forward(params, x))


def _check_labels(labels: ArrayLike, n: int, k: int) -> NDArray[np.int64]:
    y = np.asarray(labels)
    if y.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.mod(y, 1) == 0):
            raise ValueError("labels must be integer class indices")
        y = y.astype(np.int64)
    if n and (y.min() < 0 or y.max() >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    return y.astype(np.int64)


def per_sample_ce(logits: ArrayLike, labels: ArrayLike) -> Array:
    """Cross-entropy ``-log softmax(logits_i)[label_i]`` for every row."""
    z = np.asarray(logits, dtype=np.float64)
    y = _check_labels(labels, z.shape[0], z.shape[1])
    z = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    return log_norm - z[np.arange(len(y)), y]


def backward(
    params: ModelParams,
    x: ArrayLike,
    labels: ArrayLike,
    per_sample_weights: ArrayLike | None = None,
    *,
    allow_negative: bool = False,
) -> Gradients:
    """Gradient of ``(1/B) * sum_i w_i * CE_i`` with the weights held constant.

    ``allow_negative`` admits signed coefficients, which arise when the
    scaling softmax is differentiated rather than detached.
    """
    x = _check_batch(params, x)
    n = x.shape[0]
    y = _check_labels(labels, n, params.num_classes)
    w = np.ones(n) if per_sample_weights is None else np.asarray(per_sample_weights, float)
    if w.shape != (n,):
        raise ValueError(f"expected {n} per-sample weights, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValueError("per-sample weights must be finite")
    if not allow_negative and np.any(w < 0):
        raise ValueError("per-sample weights must be non-negative")

    z1 = x @ params["W1"] + params["b1"]
    if params.arch == "mlp":
        a1 = np.maximum(z1, 0.0)
        logits = a1 @ params["W2"] + params["b2"]
    else:
        logits = z1
    dlogits = softmax(logits)
    dlogits[np.arange(n), y] -= 1.0
    dlogits *= (w / n)[:, None]

    if params.arch == "linear":
        return ModelParams("linear", {"W1": x.T @ dlogits, "b1": dlogits.sum(axis=0)})
    da1 = dlogits @ params["W2"].T
    dz1 = da1 * (z1 > 0)
    return ModelParams(
        "mlp",
        {
            "W1": x.T @ dz1,
            "b1": dz1.sum(axis=0),
            "W2": a1.T @ dlogits,
            "b2": dlogits.sum(axis=0),
        },
    )


def weighted_mean_loss(
    params: ModelParams, x: ArrayLike, labels: ArrayLike, per_sample_weights: ArrayLike
) -> float:
    losses = per_sample_ce(forward(params, x), labels)
    return float(np.mean(np.asarray(per_sample_weights, float) * losses))


@dataclass(frozen=True, eq=False)
class OptimizerState:
    """AdamW moments and hyperparameters. Defaults follow the usual published values."""

    m: ModelParams
    v: ModelParams
    step: int = 0
    lr: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 0.0
    eps: float = 1e-8

    @classmethod
    def fresh(cls, params: ModelParams, **hyper) -> OptimizerState:
        return cls(m=params.zeros_like(), v=params.zeros_like(), **hyper)


def optimizer_step(
    params: ModelParams, grads: Gradients, state: OptimizerState
) -> tuple[ModelParams, OptimizerState]:
    """One AdamW update with bias correction and decoupled weight decay."""
    if grads.arch != params.arch or any(grads[k].shape != params[k].shape for k in params):
        raise ValueError("gradients are not shape-congruent with parameters")
    if state.step < 0:
        raise ValueError("optimizer step counter must be >= 0")
    if not grads.is_finite():
        raise ValueError("non-finite gradients")
    b1, b2 = state.betas
    t = state.step + 1
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    new_p, new_m, new_v = {}, {}, {}
    for k in params:
        g = grads[k]
        m = b1 * state.m[k] + (1.0 - b1) * g
        v = b2 * state.v[k] + (1.0 - b2) * g * g
        p = params[k] * (1.0 - state.lr * state.weight_decay)
        p = p - state.lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)
        new_p[k], new_m[k], new_v[k] = p, m, v
    return ModelParams(params.arch, new_p), replace(
        state, m=ModelParams(params.arch, new_m), v=ModelParams(params.arch, new_v), step=t
    )


def save_checkpoint(params: ModelParams, path: str | Path) -> Path:
    """Write parameters as an uncompressed ``.npz`` archive.

    Keys: ``arch`` (0-d unicode array holding the architecture tag) and one
    float64 array per parameter (``W1``, ``b1`` and, for ``mlp``, ``W2``,
    ``b2``), stored row-major. Reloading is bit-exact.
    """
    path = Path(path)
    with open(path, "wb") as fh:
        np.savez(fh, arch=np.array(params.arch), **params.arrays)
    return path


def load_checkpoint(path: str | Path) -> ModelParams:
    with np.load(Path(path), allow_pickle=False) as data:
        arch = str(data["arch"])
        arrays = {k: np.array(data[k]) for k in _param_names(arch)}
    return ModelParams(arch, arrays)


def numerical_gradient(
    params: ModelParams,
    x: ArrayLike,
    labels: ArrayLike,
    per_sample_weights: ArrayLike,
    step: float = 1e-5,
) -> Gradients:
    """Central finite differences of :func:`weighted_mean_loss`, one entry at a time."""
    out: dict[str, Array] = {}
    for name in params:
        grad = np.zeros_like(params[name])
        for idx in np.ndindex(*params[name].shape):
            hi = {k: v.copy() for k, v in params.arrays.items()}
            lo = {k: v.copy() for k, v in params.arrays.items()}
            hi[name][idx] += step
            lo[name][idx] -= step
            f_hi = weighted_mean_loss(ModelParams(params.arch, hi), x, labels, per_sample_weights)
            f_lo = weighted_mean_loss(ModelParams(params.arch, lo), x, labels, per_sample_weights)
            grad[idx] = (f_hi - f_lo) / (2.0 * step)
        out[name] = grad
    return ModelParams(params.arch, out)


def max_relative_error(a: Gradients, b: Gradients, floor: float = 1e-6) -> float:
    """max |a - b| / max(|a|, |b|, floor) over every entry."""
    worst = 0.0
    for k in a:
        num = np.abs(a[k] - b[k])
        den = np.maximum(np.maximum(np.abs(a[k]), np.abs(b[k])), floor)
        worst = max(worst, float(np.max(num / den)) if num.size else 0.0)
    return worst


__all__: Sequence[str] = [
    "ARCHITECTURES",
    "Gradients",
    "ModelParams",
    "OptimizerState",
    "backward",
    "forward",
    "init_params",
    "load_checkpoint",
    "max_relative_error",
    "numerical_gradient",
    "optimizer_step",
    "per_sample_ce",
    "predict_proba",
    "save_checkpoint",
    "softmax",
]
