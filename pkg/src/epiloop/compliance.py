"""Learnable compliance response and the three constraint projections.

The compliance function is a 2-layer network (inputs: risk, strictness;
16 ReLU hidden units; sigmoid output) with non-negative weights, which makes
the output monotone non-decreasing in both inputs by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import EpiloopError, InputError

HIDDEN = 16


@dataclass(frozen=True)
class ComplianceNet:
    """Monotone 2-layer network; w1 (2,16), b1 (16,), w2 (16,), b2 scalar."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float

    def __post_init__(self):
        object.__setattr__(self, "w1", np.asarray(self.w1, dtype=float))
        object.__setattr__(self, "b1", np.asarray(self.b1, dtype=float))
        object.__setattr__(self, "w2", np.asarray(self.w2, dtype=float))
        if self.w1.shape != (2, HIDDEN) or self.b1.shape != (HIDDEN,) \
                or self.w2.shape != (HIDDEN,):
            raise InputError("compliance net parameter shapes are wrong")

    def is_feasible(self) -> bool:
        return bool(np.all(self.w1 >= 0) and np.all(self.w2 >= 0))

    @classmethod
    def initial(cls, rng: np.random.Generator,
                signed: bool = False) -> "ComplianceNet":
        # Small positive weights with zero output bias: starts feasible and
        # close to the neutral response c ~ 0.5. The nonnegative range is
        # part of the constraint apparatus, so unconstrained fits initialize
        # sign-symmetric instead.
        lo = -0.1 if signed else 0.0
        return cls(
            w1=rng.uniform(lo, 0.1, size=(2, HIDDEN)),
            b1=np.zeros(HIDDEN),
            w2=rng.uniform(lo, 0.1, size=HIDDEN),
            b2=0.0,
        )


@dataclass(frozen=True)
class RiskParams:
    """Trailing-window risk normalization."""

    window: int = 7
    tau_norm: float = 0.01

    def __post_init__(self):
        if self.window < 1:
            raise InputError("window must be >= 1")
        if self.tau_norm <= 0:
            raise InputError("tau_norm must be positive")


def risk_signal(counts, t: int, population: float,
                params: RiskParams = RiskParams()) -> float:
    """Normalized trailing incidence r_t = min(1, sum(y[t-w:t]) / (N*tau)).

    Days before the series start contribute zero; only strictly past
    observations enter.
    """
    counts = np.asarray(counts, dtype=float)
    lo = max(0, t - params.window)
    window_sum = float(np.nansum(counts[lo:t])) if t > 0 else 0.0
    return min(1.0, window_sum / (population * params.tau_norm))


def risk_series(counts, population: float,
                params: RiskParams = RiskParams()) -> np.ndarray:
    """r_t for every day of the series."""
    counts = np.asarray(counts, dtype=float)
    filled = np.nan_to_num(counts, nan=0.0)
    csum = np.concatenate([[0.0], np.cumsum(filled)])
    t = np.arange(len(counts))
    lo = np.maximum(0, t - params.window)
    sums = csum[t] - csum[lo]
    return np.minimum(1.0, sums / (population * params.tau_norm))


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def eval_compliance(net: ComplianceNet, r, s) -> np.ndarray | float:
    """Forward pass c = f(r, s); r and s broadcast elementwise."""
    if not net.is_feasible():
        raise EpiloopError("compliance net violates non-negativity; projection missed")
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    x = np.stack(np.broadcast_arrays(r, s), axis=-1)  # (..., 2)
    hidden = np.maximum(0.0, x @ net.w1 + net.b1)
    out = _sigmoid(hidden @ net.w2 + net.b2)
    return float(out) if out.ndim == 0 else out


def project_nonneg(net: ComplianceNet) -> ComplianceNet:
    """Clip weight matrices at zero; biases are untouched. Idempotent."""
    return replace(net, w1=np.maximum(net.w1, 0.0), w2=np.maximum(net.w2, 0.0))


def isotonic_project(values) -> np.ndarray:
    """L2-nearest non-decreasing sequence via pool-adjacent-violators.

    Mean-preserving and idempotent.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise InputError("isotonic_project requires a non-empty sequence")
    # Blocks of (mean, weight) merged right-to-left on violation.
    means: list[float] = []
    weights: list[float] = []
    for v in values:
        m, w = float(v), 1.0
        while means and means[-1] > m:
            m = (m * w + means[-1] * weights[-1]) / (w + weights[-1])
            w += weights[-1]
            means.pop()
            weights.pop()
        means.append(m)
        weights.append(w)
    out = np.empty_like(values)
    pos = 0
    for m, w in zip(means, weights):
        out[pos:pos + int(w)] = m
        pos += int(w)
    return out


def clip_jumps(values, delta_max: float) -> np.ndarray:
    """Sequentially clamp consecutive differences to |diff| <= delta_max.

    Left-to-right pass anchored at the first value; idempotent.
    """
    values = np.asarray(values, dtype=float)
    if not (0 < delta_max <= 1):
        raise InputError(f"delta_max must be in (0, 1], got {delta_max}")
    if not np.all(np.isfinite(values)):
        raise InputError("values must be finite")
    out = values.copy()
    for t in range(1, len(out)):
        out[t] = min(max(out[t], out[t - 1] - delta_max), out[t - 1] + delta_max)
    return out


def clip_jumps_batched(values: np.ndarray, delta_max: float) -> np.ndarray:
    """clip_jumps along the last axis for a batch, loop only over time."""
    out = np.array(values, dtype=float, copy=True)
    for t in range(1, out.shape[-1]):
        prev = out[..., t - 1]
        out[..., t] = np.clip(out[..., t], prev - delta_max, prev + delta_max)
    return out
