"""Mechanistic comparison models: constant-beta SEIR, SEIR with a policy
step reduction, and SEIR with a threshold-triggered reduction.

All three share the package's RK4 core and the NB likelihood machinery; they
are fit with the same projected-gradient optimizer over a small parameter
vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from . import optimize
from .calibration import MU_FLOOR, VALID, RANGES, DEFAULTS
from .dynamics import rk4_step_arrays
from .errors import DegenerateDataError, InputError
from .io import CaseSeries, InterventionSchedule

BASELINE_KINDS = ("constant", "policy_step", "threshold")
ROLL_WINDOW = 7  # threshold trigger uses the same windowing as the risk signal


@dataclass
class BaselineSpec:
    kind: str
    beta0: float = DEFAULTS["beta0"]
    sigma: float = DEFAULTS["sigma"]
    gamma: float = DEFAULTS["gamma"]
    overdispersion: float = DEFAULTS["r"]
    reduction: float = 0.0  # step / threshold reduction factor in [0, 1]
    t_policy: int | None = None  # step: known intervention day
    threshold: float | None = None  # threshold: rolling-sum trigger level
    population: float = 0.0
    initial_infected: float = 1.0
    fit_diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in BASELINE_KINDS:
            raise InputError(f"unknown baseline kind {self.kind!r}")
        if not (0 <= self.reduction <= 1):
            raise InputError("reduction must lie in [0, 1]")
        if self.threshold is not None and self.threshold < 0:
            raise InputError("threshold must be >= 0")

    def to_payload(self) -> dict:
        return {
            "kind": self.kind, "beta0": self.beta0, "sigma": self.sigma,
            "gamma": self.gamma, "overdispersion": self.overdispersion,
            "reduction": self.reduction, "t_policy": self.t_policy,
            "threshold": self.threshold, "population": self.population,
            "initial_infected": self.initial_infected,
            "fit_diagnostics": self.fit_diagnostics,
        }

    @classmethod
    def from_payload(cls, p: dict) -> "BaselineSpec":
        return cls(
            kind=p["kind"], beta0=float(p["beta0"]), sigma=float(p["sigma"]),
            gamma=float(p["gamma"]), overdispersion=float(p["overdispersion"]),
            reduction=float(p["reduction"]),
            t_policy=None if p["t_policy"] is None else int(p["t_policy"]),
            threshold=None if p["threshold"] is None else float(p["threshold"]),
            population=float(p["population"]),
            initial_infected=float(p.get("initial_infected", 1.0)),
            fit_diagnostics=dict(p.get("fit_diagnostics", {})),
        )


def _mu_batch(beta_eff, sigma, gamma, population, seed, substeps=1):
    """Batched single-group SEIR roll-forward; beta_eff (B, T) -> mu (B, T).

    seed may be a scalar or a (B, 1) column of per-candidate seeds."""
    b, t = beta_eff.shape
    mixing = np.ones((1, 1))
    narr = np.array([population])
    e = np.broadcast_to(np.asarray(seed, float), (b, 1)).copy()
    i = e.copy()
    r = np.zeros((b, 1))
    s = np.full((b, 1), population) - e - i
    e_path = np.empty((b, t))
    dt = 1.0 / substeps
    for day in range(t):
        beta = beta_eff[:, day:day + 1]
        for _ in range(substeps):
            s, e, i, r = rk4_step_arrays(s, e, i, r, beta, sigma, gamma,
                                         narr, mixing, dt)
        np.maximum(e, 0.0, out=e)
        np.maximum(i, 0.0, out=i)
        np.maximum(s, 0.0, out=s)
        e_path[:, day] = e[:, 0]
    return np.maximum(sigma * e_path, MU_FLOOR)


def _nll(y, mu, r):
    obs = ~np.isnan(y)
    y0 = np.nan_to_num(y)
    ll = (gammaln(y0 + r) - gammaln(r) - gammaln(y0 + 1)
          + r * np.log(r / (r + mu)) + y0 * np.log(mu / (r + mu)))
    out = -np.sum(np.where(obs[None, :], ll, 0.0), axis=1)
    return np.where(np.isfinite(out), out, np.inf)


def rolling_sum(counts, window=ROLL_WINDOW):
    """Trailing sum over strictly past days, zero-padded at the start."""
    filled = np.nan_to_num(np.asarray(counts, dtype=float), nan=0.0)
    csum = np.concatenate([[0.0], np.cumsum(filled)])
    t = np.arange(len(filled))
    lo = np.maximum(0, t - window)
    return csum[t] - csum[lo]


def _beta_schedule_batch(theta, kind, t, indicator):
    """theta (B, P) -> beta_eff (B, T). indicator (T,) marks reduced days."""
    beta0 = theta[:, 0:1]
    if kind == "constant":
        return np.broadcast_to(beta0, (theta.shape[0], t)).copy()
    reduction = theta[:, 4:5]
    return beta0 * (1.0 - reduction * indicator[None, :])


def _aggregate(cases):
    if isinstance(cases, CaseSeries):
        return cases.counts.copy(), cases.population
    counts = np.sum([np.nan_to_num(s.counts, nan=np.nan) for s in cases], axis=0)
    return counts, sum(s.population for s in cases)


def fit_baseline(
    kind: str,
    cases,
    schedule: InterventionSchedule,
    max_iters: int = 200,
    seed_infected: float | None = None,
    tol: float = 1e-6,
) -> BaselineSpec:
    """NB maximum likelihood over the baseline's parameter set."""
    from .calibration import resolve_seed
    counts, population = _aggregate(cases)
    seed_infected = resolve_seed(counts, seed_infected)
    t = len(counts)
    if t < 8:
        raise InputError("series length must be >= 8")
    if np.nansum(counts) <= 0:
        raise DegenerateDataError("all-zero case series")

    strict = schedule.policy.strictness[:t]
    lo = np.array([VALID["beta0"][0], RANGES["sigma"][0], RANGES["gamma"][0],
                   math.log(1.0), 0.0, RANGES["log_seed"][0]])
    hi = np.array([VALID["beta0"][1], RANGES["sigma"][1], RANGES["gamma"][1],
                   math.log(100.0), 1.0, RANGES["log_seed"][1]])
    if kind == "constant":
        lo[4] = hi[4] = 0.0
    # initial conditions are a shared heuristic, not part of the baseline
    # parameter set; pin them during optimization
    lo[5] = hi[5] = math.log(seed_infected)
    x0 = np.array([DEFAULTS["beta0"], DEFAULTS["sigma"], DEFAULTS["gamma"],
                   math.log(DEFAULTS["r"]), 0.0 if kind == "constant" else 0.3,
                   math.log(seed_infected)])

    def project(x):
        return np.clip(x, lo, hi)

    def make_loss(indicator):
        def loss(theta):
            beta_eff = _beta_schedule_batch(theta, kind, t, indicator)
            mu = _mu_batch(beta_eff, theta[:, 1:2], theta[:, 2:3],
                           population, np.exp(theta[:, 5:6]))
            return _nll(counts, mu, np.exp(theta[:, 3:4]))
        return loss

    def run(indicator):
        return optimize.projected_gradient(
            make_loss(indicator), x0, project,
            max_iters=max_iters, tol=tol, step0=0.05,
        )

    if kind == "constant":
        res = run(np.zeros(t))
        spec = BaselineSpec("constant", **_unpack_theta(res.x),
                            population=population)
        spec.fit_diagnostics = {"final_loss": res.loss, "status": res.status,
                                "iterations": res.iterations}
        return spec

    if kind == "policy_step":
        active = np.flatnonzero(strict > 0)
        t_policy = int(active[0]) if len(active) else None  # None = never
        indicator = np.zeros(t) if t_policy is None \
            else (np.arange(t) >= t_policy).astype(float)
        res = run(indicator)
        spec = BaselineSpec("policy_step", **_unpack_theta(res.x),
                            t_policy=t_policy, population=population)
        spec.fit_diagnostics = {"final_loss": res.loss, "status": res.status,
                                "iterations": res.iterations}
        return spec

    # threshold: grid-search the trigger level over observed rolling-sum levels
    rolls = rolling_sum(counts)
    cands = np.unique(np.quantile(rolls[rolls > 0], np.linspace(0.1, 0.9, 9))) \
        if np.any(rolls > 0) else np.array([np.inf])
    best = None
    for theta_thr in cands:
        res = run((rolls > theta_thr).astype(float))
        if best is None or res.loss < best[0]:
            best = (res.loss, res, float(theta_thr))
    loss, res, theta_thr = best
    spec = BaselineSpec("threshold", **_unpack_theta(res.x),
                        threshold=theta_thr, population=population)
    spec.fit_diagnostics = {"final_loss": loss, "status": res.status,
                            "iterations": res.iterations,
                            "threshold_candidates": len(cands)}
    return spec


def _unpack_theta(theta):
    return {
        "beta0": float(theta[0]), "sigma": float(theta[1]),
        "gamma": float(theta[2]), "overdispersion": float(math.exp(theta[3])),
        "reduction": float(theta[4]),
        "initial_infected": float(math.exp(theta[5])),
    }


def simulate_baseline(
    spec: BaselineSpec,
    horizon: int,
    observed_counts: np.ndarray | None = None,
    policy_override: np.ndarray | None = None,
    t_policy_override: int | None = None,
) -> np.ndarray:
    """Deterministic roll-forward from day 0; returns daily incidence.

    The threshold rule is evaluated per day from the trailing rolling sum of
    (observed where available, else predicted) incidence.
    """
    if horizon == 0:
        return np.zeros(0)
    mixing = np.ones((1, 1))
    narr = np.array([spec.population])
    e = np.array([[spec.initial_infected]])
    i = np.array([[spec.initial_infected]])
    r = np.array([[0.0]])
    s = np.array([[spec.population]]) - e - i

    if observed_counts is not None:
        obs = np.nan_to_num(np.asarray(observed_counts, dtype=float), nan=0.0)
    else:
        obs = np.zeros(0)
    n_obs = len(obs)
    history = np.zeros(horizon)
    incidence = np.zeros(horizon)

    t_policy = spec.t_policy if t_policy_override is None else t_policy_override
    if spec.kind == "policy_step" and policy_override is not None:
        active = np.flatnonzero(np.asarray(policy_override) > 0)
        t_policy = int(active[0]) if len(active) else horizon

    for day in range(horizon):
        if spec.kind == "constant":
            reduced = False
        elif spec.kind == "policy_step":
            reduced = t_policy is not None and day >= t_policy
        else:
            lo = max(0, day - ROLL_WINDOW)
            window_vals = np.concatenate([
                obs[lo:min(day, n_obs)], history[max(lo, n_obs):day],
            ]) if day > 0 else np.zeros(0)
            reduced = float(np.sum(window_vals)) > spec.threshold
        beta = spec.beta0 * (1.0 - spec.reduction * reduced)
        s, e, i, r = rk4_step_arrays(s, e, i, r, np.array([[beta]]),
                                     spec.sigma, spec.gamma, narr, mixing, 1.0)
        for arr in (s, e, i, r):
            np.maximum(arr, 0.0, out=arr)
        incidence[day] = max(spec.sigma * float(e[0, 0]), MU_FLOOR)
        history[day] = incidence[day]
    return incidence


def forecast_baseline(
    spec: BaselineSpec,
    observed_counts: np.ndarray,
    horizon: int,
) -> np.ndarray:
    """Predict the next `horizon` days of incidence after the observations."""
    obs = np.asarray(observed_counts, dtype=float)
    t_obs = len(obs)
    full = simulate_baseline(spec, t_obs + horizon, observed_counts=obs)
    return full[t_obs:]
