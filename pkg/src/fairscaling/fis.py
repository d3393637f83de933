"""Fair identity scaling (FIS) of per-sample losses.

Every sample in a batch receives the weight

    w_i = |B| * softmax_i((c * beta[a_i] + (1 - c) * prev_loss_i) / tau)

so the weights average to one and the scaled batch loss is
``mean(w_i * loss_i)``. ``c = 1`` scales by group only, ``c = 0`` by the
individual's previous loss only, and a large ``tau`` recovers the plain
mean loss.

``prev_loss_i`` comes from a per-sample memory holding the loss observed the
last time sample ``i`` was trained on. A sample seen for the first time
falls back to its current detached loss. With ``memory_mode="current"`` the
current detached loss is always used.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np
from numpy.typing import ArrayLike, NDArray

MEMORY_MODES = ("memory", "current")


class _LossMemory(dict):
    """Marks a memory dict already owned by a FisState, so it is not copied again."""


@dataclass(frozen=True, eq=False)
class FisState:
    """Group weights, per-sample loss memory and FIS hyperparameters.

    Attributes:
        beta: learnable weight per group, shape ``(G,)``.
        loss_memory: sample id -> most recently observed loss.
        c: fusion weight in [0, 1]; 1 is group-only, 0 individual-only.
        tau: softmax temperature, > 0.
        beta_lr: step size of the group-weight ascent in :func:`update_beta`.
        memory_mode: ``"memory"`` or ``"current"``, see module docstring.
        detach: when False, training also differentiates through the
            scaling softmax (see :func:`gradient_coefficients`).
    """

    beta: NDArray[np.float64]
    loss_memory: Mapping[int, float] = field(default_factory=dict)
    c: float = 0.5
    tau: float = 1.0
    beta_lr: float = 0.01
    memory_mode: str = "memory"
    detach: bool = True

    def __post_init__(self) -> None:
        beta = np.array(self.beta, dtype=np.float64).reshape(-1)
        if beta.size == 0 or not np.all(np.isfinite(beta)):
            raise ValueError("beta must be a non-empty finite vector")
        if not 0.0 <= self.c <= 1.0:
            raise ValueError(f"fusion weight c must lie in [0, 1], got {self.c}")
        if not self.tau > 0:
            raise ValueError(f"temperature tau must be > 0, got {self.tau}")
        if not self.beta_lr >= 0:
            raise ValueError("beta_lr must be >= 0")
        if self.memory_mode not in MEMORY_MODES:
            raise ValueError(f"memory_mode must be one of {MEMORY_MODES}")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        if not isinstance(self.loss_memory, _LossMemory):
            memory = _LossMemory(self.loss_memory)
            if any(not (v >= 0) for v in memory.values()):
                raise ValueError("loss memory values must be >= 0")
            object.__setattr__(self, "loss_memory", memory)

    @classmethod
    def initial(cls, num_groups: int, **hyper) -> FisState:
        """Neutral start: every group weight zero, empty memory."""
        return cls(beta=np.zeros(num_groups), **hyper)

    @property
    def num_groups(self) -> int:
        return self.beta.size

    def to_dict(self) -> dict:
        return {
            "beta": [float(b) for b in self.beta],
            "c": self.c,
            "tau": self.tau,
            "beta_lr": self.beta_lr,
            "memory_mode": self.memory_mode,
            "detach": self.detach,
            "memory_size": len(self.loss_memory),
        }


def _as_losses(losses: ArrayLike, n: int) -> NDArray[np.float64]:
    arr = np.asarray(losses, dtype=np.float64).reshape(-1)
    if arr.shape != (n,):
        raise ValueError(f"expected {n} losses, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError("losses must be finite and non-negative")
    return arr


def prior_losses(
    state: FisState, ids: ArrayLike, current_losses: ArrayLike
) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    """Losses fed to the scaling softmax, plus a mask of entries taken from the current batch."""
    ids = np.asarray(ids).reshape(-1)
    current = _as_losses(current_losses, len(ids))
    if state.memory_mode == "current":
        return current.copy(), np.ones(len(ids), dtype=bool)
    prev = current.copy()
    live = np.ones(len(ids), dtype=bool)
    memory = state.loss_memory
    for i, sid in enumerate(ids.tolist()):
        hit = memory.get(sid)
        if hit is not None:
            prev[i] = hit
            live[i] = False
    return prev, live


def scaling_scores(state: FisState, groups: ArrayLike, prev_losses: ArrayLike) -> NDArray[np.float64]:
    groups = np.asarray(groups, dtype=np.int64).reshape(-1)
    if groups.size and (groups.min() < 0 or groups.max() >= state.num_groups):
        raise ValueError(f"group indices must lie in [0, {state.num_groups})")
    prev = np.asarray(prev_losses, dtype=np.float64)
    return state.c * state.beta[groups] + (1.0 - state.c) * prev


def batch_softmax_weights(scores: ArrayLike, tau: float) -> NDArray[np.float64]:
    """``len(scores) * softmax(scores / tau)`` with max subtraction."""
    if not tau > 0:
        raise ValueError(f"temperature tau must be > 0, got {tau}")
    s = np.asarray(scores, dtype=np.float64) / tau
    e = np.exp(s - s.max())
    return len(s) * e / e.sum()


def fis_weights(
    state: FisState, ids: ArrayLike, groups: ArrayLike, current_losses: ArrayLike
) -> NDArray[np.float64]:
    """Per-sample scaling weights for one batch; their mean is one."""
    ids = np.asarray(ids).reshape(-1)
    if ids.size == 0:
        raise ValueError("batch must not be empty")
    if np.asarray(groups).reshape(-1).shape != ids.shape:
        raise ValueError("ids and groups must have equal length")
    prev, _ = prior_losses(state, ids, current_losses)
    return batch_softmax_weights(scaling_scores(state, groups, prev), state.tau)


def fis_scaled_loss(weights: ArrayLike, current_losses: ArrayLike) -> float:
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    losses = np.asarray(current_losses, dtype=np.float64).reshape(-1)
    if w.shape != losses.shape:
        raise ValueError(f"length mismatch: {w.size} weights vs {losses.size} losses")
    return float(np.dot(w, losses) / w.size)


def gradient_coefficients(
    state: FisState,
    weights: ArrayLike,
    current_losses: ArrayLike,
    live: ArrayLike,
) -> NDArray[np.float64]:
    """Per-sample factors for backpropagating the scaled loss through the softmax.

    Returns ``k`` such that the gradient of the scaled loss equals the
    gradient of ``mean(k_i * loss_i)`` with ``k`` held fixed. Entries whose
    prior loss came from memory (``live`` False) depend on older parameters
    and keep ``k_i = w_i``; live entries add
    ``w_i * (1 - c) / tau * (loss_i - scaled_loss)``.
    """
    w = np.asarray(weights, dtype=np.float64)
    losses = np.asarray(current_losses, dtype=np.float64)
    live = np.asarray(live, dtype=bool)
    scaled = float(np.dot(w, losses) / w.size)
    return w * (1.0 + live * (1.0 - state.c) / state.tau * (losses - scaled))


def update_beta(state: FisState, groups: ArrayLike, current_losses: ArrayLike) -> FisState:
    """Raise each present group's weight by ``beta_lr`` times its batch mean loss, then re-center.

    Absent groups keep their value before re-centering, so the group weights
    always sum to zero.
    """
    groups = np.asarray(groups, dtype=np.int64).reshape(-1)
    if groups.size == 0:
        raise ValueError("batch must not be empty")
    losses = _as_losses(current_losses, groups.size)
    if groups.min() < 0 or groups.max() >= state.num_groups:
        raise ValueError(f"group indices must lie in [0, {state.num_groups})")
    sums = np.bincount(groups, weights=losses, minlength=state.num_groups)
    counts = np.bincount(groups, minlength=state.num_groups)
    step = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    beta = state.beta + state.beta_lr * step
    return replace(state, beta=beta - beta.mean())


def update_loss_memory(
    state: FisState, ids: ArrayLike, current_losses: ArrayLike, *, copy: bool = True
) -> FisState:
    """Last-write-wins record of each batch sample's loss.

    ``copy=False`` updates the memory in place, for a training loop that
    owns ``state`` and discards the old one.
    """
    ids = np.asarray(ids).reshape(-1)
    losses = _as_losses(current_losses, ids.size)
    memory = _LossMemory(state.loss_memory) if copy else state.loss_memory
    memory.update(zip(ids.tolist(), losses.tolist()))
    return replace(state, loss_memory=memory) if copy else state

