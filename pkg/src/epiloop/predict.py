"""Roll a calibrated model forward: fitted trajectories, forecasts, and the
closed-loop simulations counterfactual analysis relies on.

Risk feedback switches source depending on the mode: in-sample days can use
the observed case history (the training convention), while days beyond the
last observation always feed the model's own predicted incidence back into
the risk window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calibration import MU_FLOOR, CalibratedModel
from .dynamics import rk4_step_arrays
from .errors import InputError, IntegrationDivergedError
from .io import InterventionSchedule
from .transmission import media_activation

NEG_TOL = -1e-12


@dataclass
class ModelTrajectory:
    """Per-day incidence plus the multiplier decomposition behind it."""

    incidence: np.ndarray  # (T, G)
    m_policy: np.ndarray  # (T, G)
    m_media: np.ndarray  # (T,)
    m_comp: np.ndarray  # (T, G)
    compliance: np.ndarray  # (T, G)
    risk: np.ndarray  # (T,)
    states: np.ndarray  # (T+1, 4, G) S/E/I/R paths

    @property
    def total_incidence(self) -> np.ndarray:
        return self.incidence.sum(axis=1)


def simulate_model(
    model: CalibratedModel,
    schedule: InterventionSchedule,
    horizon: int,
    observed_counts: np.ndarray | None = None,
    policy_override: np.ndarray | None = None,
) -> ModelTrajectory:
    """Simulate `horizon` days from the outbreak start.

    observed_counts: optional (T_obs,) or (T_obs, G) history; days covered by
    it drive the risk window with observations, later days with predicted
    incidence. None means fully closed-loop (risk from predictions).
    policy_override: optional (horizon,) or (horizon, G) replacement
    strictness applied to the policy channel only.
    """
    g = len(model.groups)
    if horizon < 1:
        raise InputError("horizon must be >= 1")
    strictness = np.column_stack(
        [schedule.strictness_for(grp) for grp in model.groups]
    )
    if policy_override is not None:
        ov = np.asarray(policy_override, dtype=float)
        if ov.ndim == 1:
            ov = np.broadcast_to(ov[:, None], (len(ov), g))
        if np.any(ov < 0) or np.any(ov > 1):
            raise InputError("override strictness must lie in [0, 1]")
        strictness = ov
    if strictness.shape[0] < horizon:
        raise InputError(
            f"schedule covers {strictness.shape[0]} days < horizon {horizon}"
        )
    media = media_activation(schedule.media, np.arange(horizon, dtype=float))

    if observed_counts is not None:
        obs = np.asarray(observed_counts, dtype=float)
        if obs.ndim == 2:
            obs = np.nansum(obs, axis=1)
        else:
            obs = np.nan_to_num(obs, nan=0.0)
        n_obs = len(obs)
    else:
        obs = np.zeros(0)
        n_obs = 0

    n_total = model.populations.sum()
    window = model.risk.window
    denom = n_total * model.risk.tau_norm

    seed = model.initial_infected
    e = np.full(g, seed)
    i = np.full(g, seed)
    r = np.zeros(g)
    s = model.populations - e - i

    # case history feeding the risk window (observed where available,
    # predicted incidence beyond)
    history = np.zeros(horizon)
    incidence = np.zeros((horizon, g))
    m_policy = np.zeros((horizon, g))
    m_comp = np.zeros((horizon, g))
    compliance = np.zeros((horizon, g))
    risk = np.zeros(horizon)
    states = np.zeros((horizon + 1, 4, g))
    states[0] = [s, e, i, r]

    rho_c = np.array([model.rho_comp[grp] for grp in model.groups])
    beta0 = np.array([model.beta0[grp] for grp in model.groups])
    prev_m_comp = None

    for day in range(horizon):
        lo = max(0, day - window)
        window_vals = np.concatenate([
            obs[lo:min(day, n_obs)],
            history[max(lo, n_obs):day],
        ]) if day > 0 else np.zeros(0)
        r_t = min(1.0, float(np.sum(window_vals)) / denom)
        risk[day] = r_t

        s_day = strictness[day]
        if model.disable_compliance:
            c = np.zeros(g)
            mc = np.ones(g)
        else:
            x = np.stack([np.full(g, r_t), s_day], axis=-1)
            hidden = np.maximum(0.0, x @ model.net.w1 + model.net.b1)
            logit = np.clip(hidden @ model.net.w2 + model.net.b2, -60.0, 60.0)
            c = 1.0 / (1.0 + np.exp(-logit))
            mc = 1.0 - rho_c * c
            if not model.disable_constraints and prev_m_comp is not None:
                mc = np.clip(mc, prev_m_comp - model.delta_max,
                             prev_m_comp + model.delta_max)
        prev_m_comp = mc
        mp = np.ones(g) if model.disable_policy \
            else 1.0 - model.rho_policy * s_day
        mm = 1.0 if model.disable_media \
            else 1.0 - model.rho_media * media[day]
        beta = beta0 * mp * mm * mc

        s, e, i, r = rk4_step_arrays(
            s, e, i, r, beta, model.sigma, model.gamma,
            model.populations, model.mixing, 1.0,
        )
        if not np.all(np.isfinite(s + e + i + r)):
            raise IntegrationDivergedError(f"non-finite state at day {day}")
        if min(s.min(), e.min(), i.min(), r.min()) < NEG_TOL:
            raise IntegrationDivergedError(f"negative state at day {day}")
        s, e, i, r = (np.maximum(v, 0.0) for v in (s, e, i, r))

        inc = np.maximum(model.sigma * e, MU_FLOOR)
        incidence[day] = inc
        history[day] = inc.sum()
        m_policy[day] = mp
        m_comp[day] = mc
        compliance[day] = c
        states[day + 1] = [s, e, i, r]

    m_media_series = (np.ones(horizon) if model.disable_media
                      else 1.0 - model.rho_media * media)
    return ModelTrajectory(incidence, m_policy, m_media_series, m_comp,
                           compliance, risk, states)


def forecast(
    model: CalibratedModel,
    schedule: InterventionSchedule,
    observed_counts: np.ndarray,
    horizon: int,
) -> np.ndarray:
    """Predict total incidence for `horizon` days past the observations."""
    obs = np.asarray(observed_counts, dtype=float)
    t_obs = obs.shape[0]
    traj = simulate_model(model, schedule, t_obs + horizon,
                          observed_counts=obs)
    return traj.total_incidence[t_obs:]
