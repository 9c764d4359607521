"""Multiplicative transmission decomposition.

Effective transmission for group g on day t is
    beta0(g) * (1 - rho_policy * s_t) * (1 - rho_media * a_t) * (1 - rho_comp(g) * c_t)
where each factor equals 1 when its driving signal is zero and never drops
below 1 - rho for that channel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

# The hyperparameter table omits a default for the media ceiling; 0.3 matches
# the compliance-channel scale and is exposed in config.
DEFAULT_RHO_MEDIA = 0.3
DEFAULT_TAU_DECAY = 14.0


def _check_unit(name, value):
    v = np.asarray(value, dtype=float)
    if np.any(v < 0) or np.any(v > 1) or not np.all(np.isfinite(v)):
        raise InputError(f"{name} must lie in [0, 1], got {value}")


@dataclass
class PolicySchedule:
    """Per-day policy strictness s_t in [0, 1]."""

    strictness: np.ndarray

    def __post_init__(self):
        self.strictness = np.asarray(self.strictness, dtype=float)
        _check_unit("strictness", self.strictness)

    def __len__(self):
        return len(self.strictness)


@dataclass
class MediaEventSet:
    """Media events (day index, intensity) with exponential decay."""

    events: list[tuple[float, float]] = field(default_factory=list)
    tau_decay: float = DEFAULT_TAU_DECAY

    def __post_init__(self):
        if self.tau_decay <= 0:
            raise InputError("tau_decay must be positive")
        for t_e, intensity in self.events:
            _check_unit("media intensity", intensity)


@dataclass
class TransmissionParams:
    """Baseline rates and per-channel maximum reduction ceilings."""

    beta0: dict[str, float]
    rho_policy: float = 0.5
    rho_media: float = DEFAULT_RHO_MEDIA
    rho_comp: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for g, b in self.beta0.items():
            if b <= 0 or not np.isfinite(b):
                raise InputError(f"beta0[{g}] must be positive, got {b}")
        _check_unit("rho_policy", self.rho_policy)
        _check_unit("rho_media", self.rho_media)
        for g in self.beta0:
            self.rho_comp.setdefault(g, 0.4)
        for g, rho in self.rho_comp.items():
            _check_unit(f"rho_comp[{g}]", rho)


def policy_multiplier(s, rho_policy):
    """m_policy = 1 - rho_policy * s."""
    _check_unit("strictness", s)
    _check_unit("rho_policy", rho_policy)
    return 1.0 - rho_policy * np.asarray(s, dtype=float)


def media_activation(events: MediaEventSet, t) -> np.ndarray:
    """Accumulated, clipped media signal a_t at day(s) t.

    a_t = min(1, sum over events with t_e <= t of I_e * exp(-(t - t_e)/tau)).
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise InputError("t must be >= 0")
    total = np.zeros_like(t)
    for t_e, intensity in events.events:
        dt = t - t_e
        total += np.where(dt >= 0, intensity * np.exp(-dt / events.tau_decay), 0.0)
    return np.minimum(1.0, total)


def media_multiplier(a, rho_media):
    """m_media = 1 - rho_media * a."""
    _check_unit("activation", a)
    _check_unit("rho_media", rho_media)
    return 1.0 - rho_media * np.asarray(a, dtype=float)


def compliance_multiplier(c, rho_comp):
    """m_comp = 1 - rho_comp * c."""
    _check_unit("compliance", c)
    _check_unit("rho_comp", rho_comp)
    return 1.0 - rho_comp * np.asarray(c, dtype=float)


def beta_eff(params: TransmissionParams, s, a, c, group: str):
    """Full product beta0(g) * m_policy * m_media * m_comp for one group."""
    if group not in params.beta0:
        raise InputError(
            f"unknown group {group!r}; known: {sorted(params.beta0)}"
        )
    return (
        params.beta0[group]
        * policy_multiplier(s, params.rho_policy)
        * media_multiplier(a, params.rho_media)
        * compliance_multiplier(c, params.rho_comp[group])
    )
