"""Optimization pieces: Adam with bias correction, a cosine-annealed
learning-rate schedule, and the sharpness-aware parameter perturbation.

Everything operates on flat float64 parameter vectors (see mlp.pack_params).
The perturbation step computes ``eps = delta * sign(grad)`` per component
(the default), or ``delta * grad / ||grad||_2`` under the l2_normalized
variant; the caller then re-evaluates the gradient at ``params + eps`` and
feeds that perturbed gradient to Adam.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SAM_VARIANTS = ("sign", "l2_normalized")


def compute_epsilon(grads: np.ndarray, delta: float, variant: str = "sign") -> np.ndarray:
    """Parameter perturbation of radius delta from a flat gradient vector.

    sign variant: delta * sign(g) with sign(0) = 0, so every nonzero
    component has magnitude exactly delta. l2_normalized variant:
    delta * g / ||g||_2 over the whole vector, zero when the gradient is zero.
    """
    g = np.asarray(grads, dtype=np.float64)
    if not np.isfinite(g).all():
        raise ValueError("gradient has non-finite components")
    if delta <= 0.0:
        raise ValueError(f"delta must be positive, got {delta}")
    if variant == "sign":
        return delta * np.sign(g)
    if variant == "l2_normalized":
        norm = float(np.linalg.norm(g))
        if norm == 0.0:
            return np.zeros_like(g)
        return delta / norm * g
    raise ValueError(f"unknown perturbation variant {variant!r}")


@dataclass
class AdamState:
    """Moment accumulators for one flat parameter vector."""

    m: np.ndarray
    v: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, n_params: int, **kwargs) -> "AdamState":
        return cls(m=np.zeros(n_params), v=np.zeros(n_params), **kwargs)

    def copy(self) -> "AdamState":
        return AdamState(self.m.copy(), self.v.copy(), self.step_count,
                         self.beta1, self.beta2, self.eps)


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray, lr: float) -> np.ndarray:
    """One bias-corrected Adam update; returns new params, mutates state."""
    p = np.asarray(params, dtype=np.float64)
    g = np.asarray(grads, dtype=np.float64)
    if p.shape != g.shape or p.shape != state.m.shape:
        raise ValueError(
            f"shape mismatch: params {p.shape}, grads {g.shape}, state {state.m.shape}"
        )
    state.step_count += 1
    t = state.step_count
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * g
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = state.m / (1.0 - state.beta1 ** t)
    v_hat = state.v / (1.0 - state.beta2 ** t)
    return p - lr * m_hat / (np.sqrt(v_hat) + state.eps)


@dataclass(frozen=True)
class LrSchedule:
    """lr(t) = initial_lr * (1 + cos(pi * t / total_steps)) / 2 for cosine;
    constant keeps initial_lr throughout. lr(0) = initial_lr, cosine hits 0
    at total_steps."""

    initial_lr: float
    total_steps: int
    kind: str = "cosine"

    def __post_init__(self):
        if self.initial_lr < 0.0:
            raise ValueError("initial_lr must be non-negative")
        if self.total_steps < 1:
            raise ValueError("total_steps must be at least 1")
        if self.kind not in ("cosine", "constant"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")


def lr_at(schedule: LrSchedule, step: int) -> float:
    if not 0 <= step <= schedule.total_steps:
        raise ValueError(f"step {step} outside [0, {schedule.total_steps}]")
    if schedule.kind == "constant":
        return schedule.initial_lr
    return schedule.initial_lr * (1.0 + np.cos(np.pi * step / schedule.total_steps)) / 2.0
