"""Model calibration: penalized negative-binomial objective with projected
gradient descent.

The closed training loop per candidate parameter vector: risk signal from
observed cases -> compliance -> effective transmission -> one RK4 day step ->
predicted mean incidence -> NB likelihood plus constraint penalties. The
whole loop is vectorized over a batch of parameter vectors so that
finite-difference gradients cost one forward pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaln

from . import optimize
from .compliance import (
    HIDDEN,
    ComplianceNet,
    RiskParams,
    clip_jumps_batched,
    risk_series,
)
from .dynamics import rk4_step_arrays
from .errors import CalibrationError, DegenerateDataError, InputError
from .io import CaseSeries, InterventionSchedule
from .transmission import media_activation

MU_FLOOR = 1e-6
MONO_GRID = np.linspace(0.0, 1.0, 41)

# Tuning ranges (box constraints) for the epidemiological block.
RANGES = {
    "beta0": (0.1, 0.8),
    "sigma": (0.1, 0.5),
    "gamma": (0.05, 0.3),
    "rho_policy": (0.2, 0.8),
    "rho_media": (0.1, 0.6),  # table gap; mirrors the compliance range
    "rho_comp": (0.1, 0.6),
    "log_r": (math.log(1.0), math.log(100.0)),
    "log_seed": (math.log(0.5), math.log(2000.0)),
}
# Validity floors applied even when range enforcement is off.
VALID = {
    "beta0": (1e-4, 10.0),
    "sigma": (1e-3, 5.0),
    "gamma": (1e-3, 5.0),
    "rho_policy": (0.0, 1.0),
    "rho_media": (0.0, 1.0),
    "rho_comp": (0.0, 1.0),
    "log_r": (math.log(1e-2), math.log(1e4)),
    "log_seed": (math.log(1e-2), math.log(1e5)),
}

DEFAULTS = {
    "beta0": 0.3, "sigma": 0.2, "gamma": 0.1,
    "rho_policy": 0.5, "rho_media": 0.3, "rho_comp": 0.4, "r": 10.0,
}


@dataclass
class FitConfig:
    lambda_s: float = 0.01
    lambda_m: float = 0.1
    delta_max: float = 0.1
    max_iters: int = 500
    tol: float = 1e-6
    step_size: float = 0.05
    seed: int = 0
    patience: int = 50
    enforce_ranges: bool = True
    initial_infected: float | None = None  # None = scale to first count
    substeps: int = 1
    optimizer: str = "pgd"  # or "lbfgs"
    n_restarts: int = 1  # independent net initializations, best loss wins
    free_params: list[str] | None = None  # None = all free
    # ablation toggles
    disable_constraints: bool = False
    disable_policy: bool = False
    disable_media: bool = False
    disable_compliance: bool = False

    def __post_init__(self):
        if self.lambda_s < 0 or self.lambda_m < 0:
            raise InputError("penalty weights must be non-negative")
        if not (0 < self.tol < 1):
            raise InputError("tol must be in (0, 1)")
        if self.max_iters < 1 or self.delta_max <= 0 or self.step_size <= 0:
            raise InputError("max_iters, delta_max and step_size must be positive")


@dataclass
class CalibratedModel:
    """Everything needed to re-simulate: rates, ceilings, net, dispersion."""

    kind = "behavioral"

    groups: list[str]
    populations: np.ndarray
    mixing: np.ndarray
    beta0: dict[str, float]
    sigma: float
    gamma: float
    rho_policy: float
    rho_media: float
    rho_comp: dict[str, float]
    net: ComplianceNet
    overdispersion: float
    risk: RiskParams = field(default_factory=RiskParams)
    delta_max: float = 0.1
    initial_infected: float = 1.0
    disable_policy: bool = False
    disable_media: bool = False
    disable_compliance: bool = False
    disable_constraints: bool = False
    fit_diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.populations = np.asarray(self.populations, dtype=float)
        self.mixing = np.asarray(self.mixing, dtype=float)

    def to_payload(self) -> dict:
        return {
            "groups": self.groups,
            "populations": self.populations,
            "mixing": self.mixing,
            "beta0": self.beta0,
            "sigma": self.sigma,
            "gamma": self.gamma,
            "rho_policy": self.rho_policy,
            "rho_media": self.rho_media,
            "rho_comp": self.rho_comp,
            "net": {"w1": self.net.w1, "b1": self.net.b1,
                    "w2": self.net.w2, "b2": self.net.b2},
            "overdispersion": self.overdispersion,
            "risk": {"window": self.risk.window, "tau_norm": self.risk.tau_norm},
            "delta_max": self.delta_max,
            "initial_infected": self.initial_infected,
            "disable_policy": self.disable_policy,
            "disable_media": self.disable_media,
            "disable_compliance": self.disable_compliance,
            "disable_constraints": self.disable_constraints,
            "fit_diagnostics": self.fit_diagnostics,
        }

    @classmethod
    def from_payload(cls, p: dict) -> "CalibratedModel":
        net = ComplianceNet(
            np.asarray(p["net"]["w1"]), np.asarray(p["net"]["b1"]),
            np.asarray(p["net"]["w2"]), float(p["net"]["b2"]),
        )
        return cls(
            groups=list(p["groups"]),
            populations=np.asarray(p["populations"], dtype=float),
            mixing=np.asarray(p["mixing"], dtype=float),
            beta0={k: float(v) for k, v in p["beta0"].items()},
            sigma=float(p["sigma"]), gamma=float(p["gamma"]),
            rho_policy=float(p["rho_policy"]), rho_media=float(p["rho_media"]),
            rho_comp={k: float(v) for k, v in p["rho_comp"].items()},
            net=net, overdispersion=float(p["overdispersion"]),
            risk=RiskParams(int(p["risk"]["window"]), float(p["risk"]["tau_norm"])),
            delta_max=float(p["delta_max"]),
            initial_infected=float(p.get("initial_infected", 1.0)),
            disable_policy=bool(p.get("disable_policy", False)),
            disable_media=bool(p.get("disable_media", False)),
            disable_compliance=bool(p.get("disable_compliance", False)),
            disable_constraints=bool(p.get("disable_constraints", False)),
            fit_diagnostics=dict(p.get("fit_diagnostics", {})),
        )


# ---------------------------------------------------------------------------
# Negative binomial likelihood and penalties


def nb_loglik(y, mu, r):
    """Log pmf of NB with mean mu and dispersion r (var = mu + mu^2/r)."""
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    r = np.asarray(r, dtype=float)
    if np.any(mu <= 0) or np.any(r <= 0):
        raise InputError("mu and r must be positive")
    if np.any(y < 0):
        raise InputError("y must be non-negative")
    out = (gammaln(y + r) - gammaln(r) - gammaln(y + 1)
           + r * np.log(r / (r + mu)) + y * np.log(mu / (r + mu)))
    return out if out.ndim else float(out)


def smooth_penalty(m_comp, lambda_s: float) -> float:
    """lambda_s * sum of squared day-to-day changes of the compliance multiplier."""
    m = np.asarray(m_comp, dtype=float)
    return float(lambda_s * np.sum(np.diff(m, axis=0) ** 2))


def mono_penalty(net: ComplianceNet, grid, lambda_m: float) -> float:
    """Penalize decreases of the compliance response along an ascending risk grid."""
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) < 0):
        raise InputError("grid must be ascending")
    x = np.stack([grid, np.full_like(grid, 0.5)], axis=-1)
    hidden = np.maximum(0.0, x @ net.w1 + net.b1)
    resp = 1.0 / (1.0 + np.exp(-(hidden @ net.w2 + net.b2)))
    neg = np.minimum(0.0, np.diff(resp))
    return float(lambda_m * np.sum(neg ** 2))


# ---------------------------------------------------------------------------
# Parameter vector packing

def param_layout(n_groups: int) -> dict[str, slice]:
    g = n_groups
    off = 0
    layout = {}
    for name, width in [
        ("beta0", g), ("sigma", 1), ("gamma", 1), ("rho_policy", 1),
        ("rho_media", 1), ("rho_comp", g), ("log_r", 1), ("log_seed", 1),
        ("w1", 2 * HIDDEN), ("b1", HIDDEN), ("w2", HIDDEN), ("b2", 1),
    ]:
        layout[name] = slice(off, off + width)
        off += width
    layout["__size__"] = off
    return layout


def pack(model: CalibratedModel, layout) -> np.ndarray:
    theta = np.zeros(layout["__size__"])
    theta[layout["beta0"]] = [model.beta0[g] for g in model.groups]
    theta[layout["sigma"]] = model.sigma
    theta[layout["gamma"]] = model.gamma
    theta[layout["rho_policy"]] = model.rho_policy
    theta[layout["rho_media"]] = model.rho_media
    theta[layout["rho_comp"]] = [model.rho_comp[g] for g in model.groups]
    theta[layout["log_r"]] = math.log(model.overdispersion)
    theta[layout["log_seed"]] = math.log(model.initial_infected)
    theta[layout["w1"]] = model.net.w1.ravel()
    theta[layout["b1"]] = model.net.b1
    theta[layout["w2"]] = model.net.w2
    theta[layout["b2"]] = model.net.b2
    return theta


def unpack(theta: np.ndarray, layout, template: CalibratedModel) -> CalibratedModel:
    groups = template.groups
    net = ComplianceNet(
        theta[layout["w1"]].reshape(2, HIDDEN),
        theta[layout["b1"]].copy(),
        theta[layout["w2"]].copy(),
        float(theta[layout["b2"]][0]),
    )
    return replace(
        template,
        beta0=dict(zip(groups, theta[layout["beta0"]].tolist())),
        sigma=float(theta[layout["sigma"]][0]),
        gamma=float(theta[layout["gamma"]][0]),
        rho_policy=float(theta[layout["rho_policy"]][0]),
        rho_media=float(theta[layout["rho_media"]][0]),
        rho_comp=dict(zip(groups, theta[layout["rho_comp"]].tolist())),
        overdispersion=float(np.exp(theta[layout["log_r"]][0])),
        initial_infected=float(np.exp(theta[layout["log_seed"]][0])),
        net=net,
    )


# ---------------------------------------------------------------------------
# Batched forward model


@dataclass
class FitData:
    """Preprocessed observation tensors shared by every loss evaluation."""

    counts: np.ndarray  # (T, G), NaN = missing
    populations: np.ndarray  # (G,)
    mixing: np.ndarray  # (G, G)
    strictness: np.ndarray  # (T, G)
    media_act: np.ndarray  # (T,)
    risk: np.ndarray  # (T,)
    groups: list[str]

    @property
    def horizon(self):
        return self.counts.shape[0]


def prepare_fit_data(
    cases: CaseSeries | list[CaseSeries],
    schedule: InterventionSchedule,
    risk_params: RiskParams,
    mixing: np.ndarray | None = None,
) -> FitData:
    if isinstance(cases, CaseSeries):
        series_list = [cases]
    else:
        series_list = list(cases)
    g = len(series_list)
    t = len(series_list[0])
    for s in series_list:
        if len(s) != t:
            raise InputError("group series must have equal length")
    counts = np.column_stack([s.counts for s in series_list])
    groups = [s.group or "all" for s in series_list]
    populations = np.array([s.population for s in series_list], dtype=float)
    if g > 1:
        # population column in multi-group files is per group
        pass
    if mixing is None:
        mixing = np.eye(g) if g > 1 else np.ones((1, 1))
    mixing = np.asarray(mixing, dtype=float)
    if mixing.shape != (g, g):
        raise InputError(f"mixing must be ({g},{g})")
    strictness = np.column_stack(
        [schedule.strictness_for(grp)[:t] for grp in groups]
    )
    if len(schedule.policy) < t:
        raise InputError("policy schedule shorter than case series")
    media_act = media_activation(schedule.media, np.arange(t, dtype=float))
    total_counts = np.nansum(counts, axis=1)
    risk = risk_series(total_counts, populations.sum(), risk_params)
    return FitData(counts, populations, mixing, strictness, media_act,
                   risk, groups)


def forward_batch(theta: np.ndarray, layout, data: FitData, cfg: FitConfig):
    """Simulate a (B, P) parameter batch; returns (mu, m_comp) as (B, T, G)."""
    b = theta.shape[0]
    t, g = data.counts.shape
    beta0 = theta[:, layout["beta0"]]  # (B, G)
    sigma = theta[:, layout["sigma"]]  # (B, 1)
    gamma = theta[:, layout["gamma"]]
    rho_p = theta[:, layout["rho_policy"]]
    rho_m = theta[:, layout["rho_media"]]
    rho_c = theta[:, layout["rho_comp"]]  # (B, G)
    w1 = theta[:, layout["w1"]].reshape(b, 2, HIDDEN)
    b1 = theta[:, layout["b1"]]
    w2 = theta[:, layout["w2"]]
    b2 = theta[:, layout["b2"]]

    # compliance response per day/group
    if cfg.disable_compliance:
        m_comp = np.ones((b, t, g))
    else:
        x = np.stack(
            [np.broadcast_to(data.risk[:, None], (t, g)), data.strictness],
            axis=-1,
        )  # (T, G, 2)
        hidden = np.einsum("tgj,bjh->btgh", x, w1) + b1[:, None, None, :]
        np.maximum(hidden, 0.0, out=hidden)
        z = np.einsum("btgh,bh->btg", hidden, w2) + b2[:, None]
        c = 1.0 / (1.0 + np.exp(-z))
        m_comp = 1.0 - rho_c[:, None, :] * c
        if not cfg.disable_constraints:
            m_comp = np.swapaxes(
                clip_jumps_batched(np.swapaxes(m_comp, 1, 2), cfg.delta_max), 1, 2
            )

    m_policy = (np.ones((b, t, g)) if cfg.disable_policy
                else 1.0 - rho_p[:, None] * data.strictness[None, :, :])
    m_media = (np.ones((b, t, 1)) if cfg.disable_media
               else 1.0 - (rho_m * data.media_act[None, :])[:, :, None])
    beta_eff = beta0[:, None, :] * m_policy * m_media * m_comp  # (B, T, G)

    seed = np.exp(theta[:, layout["log_seed"]])  # (B, 1)
    e = seed * np.ones((b, g))
    i = seed * np.ones((b, g))
    r = np.zeros((b, g))
    s = np.broadcast_to(data.populations, (b, g)) - e - i
    s = np.array(s)
    e_path = np.empty((b, t, g))
    dt = 1.0 / cfg.substeps
    for day in range(t):
        beta = beta_eff[:, day, :]
        for _ in range(cfg.substeps):
            s, e, i, r = rk4_step_arrays(
                s, e, i, r, beta, sigma, gamma,
                data.populations, data.mixing, dt,
            )
        # fitting path: clamp silently, divergence handled via inf loss
        np.maximum(s, 0.0, out=s)
        np.maximum(e, 0.0, out=e)
        np.maximum(i, 0.0, out=i)
        np.maximum(r, 0.0, out=r)
        e_path[:, day, :] = e
    mu = np.maximum(sigma[:, :, None] * e_path, MU_FLOOR)
    return mu, m_comp


def loss_batch(theta: np.ndarray, layout, data: FitData, cfg: FitConfig):
    """Penalized negative log likelihood for a parameter batch; (B,)."""
    with np.errstate(over="ignore", invalid="ignore"):
        mu, m_comp = forward_batch(theta, layout, data, cfg)
        r = np.exp(theta[:, layout["log_r"]])[:, :, None]  # (B,1,1)
        y = data.counts[None, :, :]
        obs = ~np.isnan(data.counts)
        ll = (gammaln(np.nan_to_num(y) + r) - gammaln(r)
              - gammaln(np.nan_to_num(y) + 1)
              + r * np.log(r / (r + mu))
              + np.nan_to_num(y) * np.log(mu / (r + mu)))
        nll = -np.sum(np.where(obs[None, :, :], ll, 0.0), axis=(1, 2))
        smooth = cfg.lambda_s * np.sum(np.diff(m_comp, axis=1) ** 2, axis=(1, 2))
        mono = _mono_penalty_batch(theta, layout, cfg)
        total = nll + smooth + mono
    return np.where(np.isfinite(total), total, np.inf)


def _mono_penalty_batch(theta, layout, cfg):
    if cfg.lambda_m == 0 or cfg.disable_compliance:
        return np.zeros(theta.shape[0])
    b = theta.shape[0]
    w1 = theta[:, layout["w1"]].reshape(b, 2, HIDDEN)
    b1 = theta[:, layout["b1"]]
    w2 = theta[:, layout["w2"]]
    b2 = theta[:, layout["b2"]]
    x = np.stack([MONO_GRID, np.full_like(MONO_GRID, 0.5)], axis=-1)  # (K,2)
    hidden = np.einsum("kj,bjh->bkh", x, w1) + b1[:, None, :]
    np.maximum(hidden, 0.0, out=hidden)
    resp = 1.0 / (1.0 + np.exp(-(np.einsum("bkh,bh->bk", hidden, w2)
                                 + b2)))
    neg = np.minimum(0.0, np.diff(resp, axis=1))
    return cfg.lambda_m * np.sum(neg ** 2, axis=1)


def resolve_seed(counts, initial_infected=None, sigma=None) -> float:
    """Initial E=I seeding: explicit value, or scaled so day-one predicted
    incidence sigma*E matches the first positive observed count."""
    if initial_infected is not None:
        return float(initial_infected)
    if sigma is None:
        sigma = DEFAULTS["sigma"]
    total = np.nansum(np.atleast_2d(np.asarray(counts, float).T).T, axis=1)
    pos = total[total > 0]
    if len(pos) == 0:
        return 1.0
    return max(1.0, float(pos[0]) / sigma)


def objective(
    model: CalibratedModel,
    cases: CaseSeries | list[CaseSeries],
    schedule: InterventionSchedule,
    config: FitConfig,
) -> float:
    """Full closed-loop penalized loss at the model's parameters."""
    data = prepare_fit_data(cases, schedule, model.risk, model.mixing)
    if data.horizon < model.risk.window + 1:
        raise InputError("series shorter than risk window + 1")
    layout = param_layout(len(model.groups))
    cfg = replace(config, delta_max=model.delta_max,
                  initial_infected=model.initial_infected)
    theta = pack(model, layout)
    return float(loss_batch(theta[None, :], layout, data, cfg)[0])


# ---------------------------------------------------------------------------
# Fitting


def _make_projector(layout, cfg: FitConfig, n_groups: int,
                    seed_cap: float | None = None):
    size = layout["__size__"]
    lo = np.full(size, -np.inf)
    hi = np.full(size, np.inf)
    for name in ("beta0", "sigma", "gamma", "rho_policy", "rho_media",
                 "rho_comp", "log_r", "log_seed"):
        v_lo, v_hi = VALID[name]
        if cfg.enforce_ranges:
            r_lo, r_hi = RANGES[name]
            v_lo, v_hi = max(v_lo, r_lo), min(v_hi, r_hi)
        if name == "log_seed" and seed_cap is not None:
            # E0 = I0 = seed per group, so 2*seed must stay below the
            # smallest group population for the state to remain valid
            v_hi = min(v_hi, math.log(seed_cap))
            v_lo = min(v_lo, v_hi)
        lo[layout[name]] = v_lo
        hi[layout[name]] = v_hi
    weight_idx = np.zeros(size, dtype=bool)
    weight_idx[layout["w1"]] = True
    weight_idx[layout["w2"]] = True
    if not cfg.disable_constraints:
        lo[weight_idx] = np.maximum(lo[weight_idx], 0.0)

    def project(theta):
        return np.clip(theta, lo, hi)

    project.bounds = (lo, hi)
    return project


def init_beta0_from_growth(counts_total, sigma, gamma):
    """Early exponential growth slope mapped through the SEIR relation."""
    y = np.asarray(counts_total, dtype=float)
    pos = np.flatnonzero(np.nan_to_num(y) > 0)
    if len(pos) < 2:
        return DEFAULTS["beta0"]
    take = pos[:7]
    t = take.astype(float)
    logy = np.log(y[take])
    slope = np.polyfit(t, logy, 1)[0]
    lam = max(slope, 0.0)
    return gamma + lam * (lam + sigma + gamma) / sigma


def fit(
    cases: CaseSeries | list[CaseSeries],
    schedule: InterventionSchedule,
    config: FitConfig = FitConfig(),
    mixing: np.ndarray | None = None,
    risk_params: RiskParams = RiskParams(),
    warm_start: CalibratedModel | None = None,
) -> CalibratedModel:
    """Calibrate the full model to a case series."""
    data = prepare_fit_data(cases, schedule, risk_params, mixing)
    t, g = data.counts.shape
    # floor chosen as risk window + 1 so short rolling-origin folds stay
    # fittable on the 14-day bundled series
    if t < 8:
        raise InputError("series length must be >= 8")
    total = np.nansum(data.counts)
    if total <= 0:
        raise DegenerateDataError("all-zero case series")

    layout = param_layout(g)
    rng = np.random.default_rng(config.seed)
    seed_fixed = config.initial_infected is not None
    if config.initial_infected is None and warm_start is not None:
        seed0 = warm_start.initial_infected
    else:
        seed0 = resolve_seed(data.counts, config.initial_infected)
    config = replace(config, initial_infected=seed0)

    if warm_start is not None:
        template = replace(warm_start, fit_diagnostics={})
        starts = [pack(warm_start, layout)]
    else:
        sigma0, gamma0 = DEFAULTS["sigma"], DEFAULTS["gamma"]
        beta0_init = init_beta0_from_growth(
            np.nansum(data.counts, axis=1), sigma0, gamma0
        )
        net0 = ComplianceNet.initial(rng, signed=config.disable_constraints)
        template = CalibratedModel(
            groups=data.groups,
            populations=data.populations,
            mixing=data.mixing,
            beta0={grp: beta0_init for grp in data.groups},
            sigma=sigma0, gamma=gamma0,
            rho_policy=DEFAULTS["rho_policy"],
            rho_media=DEFAULTS["rho_media"],
            rho_comp={grp: DEFAULTS["rho_comp"] for grp in data.groups},
            net=net0, overdispersion=DEFAULTS["r"],
            risk=risk_params, delta_max=config.delta_max,
            initial_infected=config.initial_infected,
            disable_policy=config.disable_policy,
            disable_media=config.disable_media,
            disable_compliance=config.disable_compliance,
            disable_constraints=config.disable_constraints,
        )
        starts = [pack(template, layout)]
        for k in range(1, config.n_restarts):
            restart_rng = np.random.default_rng(config.seed + 1000 * k)
            # restarts explore the epidemiological timescales as well as the
            # net: the likelihood surface has distinct (sigma, gamma) basins
            sigma_k = restart_rng.uniform(*RANGES["sigma"])
            gamma_k = restart_rng.uniform(*RANGES["gamma"])
            beta_k = init_beta0_from_growth(
                np.nansum(data.counts, axis=1), sigma_k, gamma_k
            )
            seed_k = config.initial_infected if seed_fixed else \
                resolve_seed(data.counts, None, sigma_k)
            theta_k = pack(replace(template,
                                   sigma=sigma_k, gamma=gamma_k,
                                   beta0={grp: beta_k for grp in data.groups},
                                   initial_infected=seed_k,
                                   net=ComplianceNet.initial(
                                       restart_rng,
                                       signed=config.disable_constraints)),
                           layout)
            starts.append(theta_k)

    project = _make_projector(layout, config, g,
                              seed_cap=0.25 * float(data.populations.min()))
    free_mask = _free_mask(layout, config)
    if seed_fixed:
        free_mask[layout["log_seed"]] = False

    def batched(th):
        return loss_batch(th, layout, data, config)

    result = None
    try:
        for theta0 in starts:
            if config.optimizer == "lbfgs":
                res_k = _lbfgs_fit(batched, theta0, project, free_mask, config)
            else:
                res_k = optimize.projected_gradient(
                    batched, theta0, project,
                    max_iters=config.max_iters, tol=config.tol,
                    patience=config.patience, step0=config.step_size,
                    free_mask=free_mask,
                )
            if result is None or res_k.loss < result.loss:
                result = res_k
    except FloatingPointError as exc:
        raise CalibrationError(str(exc), iteration=0) from exc

    theta = project(result.x)
    model = unpack(theta, layout, template)
    model.delta_max = config.delta_max
    weight_clips = int(np.sum(result.x[layout["w1"]] < 0)
                       + np.sum(result.x[layout["w2"]] < 0))
    model.fit_diagnostics = {
        "final_loss": result.loss,
        "iterations": result.iterations,
        "status": result.status,
        "weight_clip_events": weight_clips,
        "loss_history_len": len(result.history),
    }
    model.fit_diagnostics["loss_history"] = [float(v) for v in result.history]
    return model


def _free_mask(layout, cfg: FitConfig):
    size = layout["__size__"]
    if cfg.free_params is None:
        mask = np.ones(size, dtype=bool)
        if cfg.disable_compliance:
            for name in ("w1", "b1", "w2", "b2", "rho_comp"):
                mask[layout[name]] = False
        if cfg.disable_policy:
            mask[layout["rho_policy"]] = False
        if cfg.disable_media:
            mask[layout["rho_media"]] = False
        return mask
    mask = np.zeros(size, dtype=bool)
    for name in cfg.free_params:
        mask[layout[name]] = True
    return mask


def _lbfgs_fit(batched, theta0, project, free_mask, cfg: FitConfig):
    """Optional quasi-Newton backend; projection applied after convergence."""
    from scipy.optimize import minimize

    def f(x):
        return float(batched(x[None, :])[0])

    def jac(x):
        return optimize.fd_gradient(batched, x, free_mask=free_mask)

    lo, hi = project.bounds
    bounds = [(a if np.isfinite(a) else None, b if np.isfinite(b) else None)
              for a, b in zip(lo, hi)]
    # fixed coordinates become degenerate bounds
    x0 = project(theta0)
    for j in np.flatnonzero(~free_mask):
        bounds[j] = (x0[j], x0[j])
    res = minimize(f, x0, jac=jac, method="L-BFGS-B", bounds=bounds,
                   options={"maxiter": cfg.max_iters, "ftol": cfg.tol})
    x = project(res.x)
    # a few projected-gradient polish steps restore feasible-set optimality
    polish = optimize.projected_gradient(
        batched, x, project, max_iters=20, tol=cfg.tol,
        patience=5, step0=cfg.step_size / 10, free_mask=free_mask,
    )
    hist = [float(res.fun)] + polish.history
    return optimize.OptResult(polish.x, polish.loss, hist,
                              int(res.nit) + polish.iterations, "converged")
