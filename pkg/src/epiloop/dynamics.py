"""Deterministic SEIR dynamics on a daily grid with fixed-step RK4.

Single-group and multi-group (contact-matrix coupled) populations share one
integrator core: `rk4_step_arrays` operates on arrays of shape (..., G) so
the calibration engine can batch many parameter vectors through the same
code path that the public scalar API uses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, IntegrationDivergedError

CONSERVATION_TOL = 1e-8
NEG_TOL = -1e-12


@dataclass(frozen=True)
class SeirState:
    """Compartment occupancies in persons for a closed population."""

    s: float
    e: float
    i: float
    r: float

    @property
    def n(self) -> float:
        return self.s + self.e + self.i + self.r

    def validate(self) -> None:
        vals = (self.s, self.e, self.i, self.r)
        if not all(np.isfinite(vals)):
            raise InputError(f"non-finite compartments: {vals}")
        if min(vals) < NEG_TOL:
            raise InputError(f"negative compartment: {vals}")


@dataclass(frozen=True)
class EpiRates:
    """Per-day transition rates. sigma = 1/latent period, gamma = 1/infectious period."""

    beta_eff: float
    sigma: float
    gamma: float

    def validate(self) -> None:
        if not np.isfinite(self.beta_eff) or self.beta_eff < 0:
            raise InputError(f"beta_eff must be finite and >= 0, got {self.beta_eff}")
        if self.sigma <= 0 or self.gamma <= 0:
            raise InputError("sigma and gamma must be strictly positive")


@dataclass
class MultiGroupState:
    """Per-group SEIR compartments coupled through a contact matrix."""

    groups: list[str]
    states: list[SeirState]
    populations: np.ndarray
    mixing: np.ndarray

    def __post_init__(self):
        self.populations = np.asarray(self.populations, dtype=float)
        self.mixing = np.asarray(self.mixing, dtype=float)
        g = len(self.groups)
        if len(self.states) != g or self.populations.shape != (g,):
            raise InputError("groups, states and populations must align")
        if self.mixing.shape != (g, g):
            raise InputError(
                f"mixing matrix must be {g}x{g}, got {self.mixing.shape}"
            )
        if np.any(self.mixing < 0):
            raise InputError("mixing matrix entries must be non-negative")
        for st, n in zip(self.states, self.populations):
            if abs(st.n - n) > CONSERVATION_TOL * max(n, 1.0):
                raise InputError("group compartments do not sum to population")


@dataclass
class SimResult:
    """Trajectory plus the daily incidence read-out sigma*E(t)."""

    states: list  # SeirState or MultiGroupState, horizon+1 entries
    incidence: np.ndarray  # (horizon,) or (horizon, G)
    clamp_events: int = 0


def _rhs(s, e, i, beta_eff, sigma, gamma, n, mixing):
    """SEIR right-hand side for arrays shaped (..., G)."""
    foi_rate = beta_eff * i / n  # (..., G)
    lam = foi_rate @ mixing.T  # sum_h C_gh * beta_h * I_h / N_h
    new_exp = s * lam
    ds = -new_exp
    de = new_exp - sigma * e
    di = sigma * e - gamma * i
    dr = gamma * i
    return ds, de, di, dr


def rk4_step_arrays(s, e, i, r, beta_eff, sigma, gamma, n, mixing, dt):
    """One classical RK4 step; inputs broadcast over (..., G)."""
    k1 = _rhs(s, e, i, beta_eff, sigma, gamma, n, mixing)
    h = 0.5 * dt
    k2 = _rhs(s + h * k1[0], e + h * k1[1], i + h * k1[2],
              beta_eff, sigma, gamma, n, mixing)
    k3 = _rhs(s + h * k2[0], e + h * k2[1], i + h * k2[2],
              beta_eff, sigma, gamma, n, mixing)
    k4 = _rhs(s + dt * k3[0], e + dt * k3[1], i + dt * k3[2],
              beta_eff, sigma, gamma, n, mixing)
    w = dt / 6.0
    sn = s + w * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    en = e + w * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    inn = i + w * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    rn = r + w * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
    return sn, en, inn, rn


def _check_and_clamp(arrs, strict=True):
    """Clamp tiny negatives to zero; raise on true negativity or non-finite values.

    Returns (clamped arrays, number of clamp events).
    """
    clamps = 0
    out = []
    for a in arrs:
        a = np.asarray(a, dtype=float)
        if not np.all(np.isfinite(a)):
            raise IntegrationDivergedError("non-finite compartment value")
        neg = a < 0
        if np.any(neg):
            if strict and np.any(a < NEG_TOL):
                raise IntegrationDivergedError(
                    f"compartment below tolerance {NEG_TOL}: min={a.min()}"
                )
            clamps += int(np.count_nonzero(neg))
            a = np.where(neg, np.maximum(a, 0.0), a)
        out.append(a)
    return out, clamps


def rk4_step(state: SeirState, rates: EpiRates, dt: float = 1.0) -> SeirState:
    """Advance a single-group state by dt days."""
    if dt <= 0:
        raise InputError(f"dt must be positive, got {dt}")
    state.validate()
    rates.validate()
    n = state.n
    mixing = np.ones((1, 1))
    s, e, i, r = (np.array([v]) for v in (state.s, state.e, state.i, state.r))
    s, e, i, r = rk4_step_arrays(
        s, e, i, r, np.array([rates.beta_eff]), rates.sigma, rates.gamma,
        np.array([n]), mixing, dt
    )
    (s, e, i, r), _ = _check_and_clamp((s, e, i, r))
    return SeirState(float(s[0]), float(e[0]), float(i[0]), float(r[0]))


def simulate(
    initial: SeirState,
    beta_schedule,
    sigma: float,
    gamma: float,
    horizon: int,
    substeps: int = 1,
) -> SimResult:
    """Roll the single-group model forward `horizon` days.

    Returns horizon+1 states and a length-horizon incidence series
    sigma*E(t) evaluated at each end-of-day state.
    """
    beta_schedule = np.asarray(beta_schedule, dtype=float)
    if horizon < 1:
        raise InputError("horizon must be >= 1")
    if len(beta_schedule) < horizon:
        raise InputError(
            f"beta schedule length {len(beta_schedule)} < horizon {horizon}"
        )
    initial.validate()
    n = initial.n
    mixing = np.ones((1, 1))
    narr = np.array([n])
    s, e, i, r = (np.array([v]) for v in
                  (initial.s, initial.e, initial.i, initial.r))
    states = [initial]
    incidence = np.empty(horizon)
    clamps = 0
    dt = 1.0 / substeps
    for day in range(horizon):
        beta = np.array([beta_schedule[day]])
        for _ in range(substeps):
            s, e, i, r = rk4_step_arrays(s, e, i, r, beta, sigma, gamma,
                                         narr, mixing, dt)
        (s, e, i, r), c = _check_and_clamp((s, e, i, r))
        clamps += c
        states.append(SeirState(float(s[0]), float(e[0]), float(i[0]), float(r[0])))
        incidence[day] = sigma * float(e[0])
    return SimResult(states, incidence, clamps)


def simulate_multigroup(
    initial: MultiGroupState,
    beta_schedules,
    sigma: float,
    gamma: float,
    horizon: int,
    substeps: int = 1,
) -> SimResult:
    """Coupled multi-group roll-forward.

    beta_schedules: array (horizon, G) of per-group effective rates.
    Incidence is per-group sigma*E_g(t), shape (horizon, G).
    """
    beta_schedules = np.asarray(beta_schedules, dtype=float)
    g = len(initial.groups)
    if horizon < 1:
        raise InputError("horizon must be >= 1")
    if beta_schedules.ndim != 2 or beta_schedules.shape[1] != g:
        raise InputError(
            f"beta_schedules must be (horizon, {g}), got {beta_schedules.shape}"
        )
    if beta_schedules.shape[0] < horizon:
        raise InputError("beta schedule shorter than horizon")
    s = np.array([st.s for st in initial.states])
    e = np.array([st.e for st in initial.states])
    i = np.array([st.i for st in initial.states])
    r = np.array([st.r for st in initial.states])
    states = [initial]
    incidence = np.empty((horizon, g))
    clamps = 0
    dt = 1.0 / substeps
    for day in range(horizon):
        beta = beta_schedules[day]
        for _ in range(substeps):
            s, e, i, r = rk4_step_arrays(
                s, e, i, r, beta, sigma, gamma,
                initial.populations, initial.mixing, dt
            )
        (s, e, i, r), c = _check_and_clamp((s, e, i, r))
        clamps += c
        states.append(MultiGroupState(
            initial.groups,
            [SeirState(*vals) for vals in zip(s, e, i, r)],
            initial.populations,
            initial.mixing,
        ))
        incidence[day] = sigma * e
    return SimResult(states, incidence, clamps)


def initial_state(n: float, seed: float = 1.0) -> SeirState:
    """Default outbreak start: E(0) = I(0) = seed, R(0) = 0."""
    if seed < 0 or 2 * seed > n:
        raise InputError("seed must satisfy 0 <= 2*seed <= N")
    return SeirState(n - 2 * seed, seed, seed, 0.0)
