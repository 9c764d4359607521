"""Forecast accuracy protocols: rolling-origin cross validation, the
distribution-shift (mild-policy to strict-lockdown) stress test, constraint
ablations, and bootstrap block-length sensitivity.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .baselines import BASELINE_KINDS, fit_baseline, forecast_baseline
from .calibration import FitConfig, fit
from .counterfactual import BootstrapConfig, Scenario, block_bootstrap
from .errors import InputError
from .io import CaseSeries, InterventionSchedule
from .predict import forecast


def rmse(pred, obs) -> float:
    pred = np.asarray(pred, dtype=float)
    obs = np.asarray(obs, dtype=float)
    if pred.shape != obs.shape:
        raise InputError("prediction and observation shapes differ")
    mask = ~np.isnan(obs)
    if not mask.any():
        raise InputError("no observed values to score")
    return float(np.sqrt(np.mean((pred[mask] - obs[mask]) ** 2)))


def _truncate(series, t: int):
    if isinstance(series, list):
        return [_truncate(s, t) for s in series]
    return CaseSeries(series.dates[:t], series.counts[:t].copy(),
                      series.population, series.group)


def _total_counts(cases) -> np.ndarray:
    if isinstance(cases, list):
        return np.sum([np.nan_to_num(s.counts, nan=0.0) for s in cases],
                      axis=0)
    return cases.counts


def _train_counts(cases):
    """Observed history in the layout forecast() expects."""
    if isinstance(cases, list):
        return np.column_stack([s.counts for s in cases])
    return cases.counts


def _aggregate_series(cases) -> CaseSeries:
    if not isinstance(cases, list):
        return cases
    counts = np.sum([np.nan_to_num(s.counts, nan=0.0) for s in cases], axis=0)
    return CaseSeries(cases[0].dates, counts,
                      sum(s.population for s in cases))


def _series_len(cases) -> int:
    return len(cases[0]) if isinstance(cases, list) else len(cases)


def rolling_origin_rmse(
    cases,
    schedule: InterventionSchedule,
    fit_config: FitConfig,
    horizon: int = 7,
    n_origins: int = 5,
    kinds=("behavioral",) + BASELINE_KINDS,
    mixing: np.ndarray | None = None,
    aggregate_groups: bool = False,
    per_fold: bool = False,
) -> dict:
    """Mean out-of-sample RMSE per model kind over forecast origins evenly
    spaced across the last half of the series.

    Multi-group input is scored on total incidence across groups;
    aggregate_groups=True collapses groups before fitting (the single-group
    ablation of a multi-group dataset). per_fold=True returns the origin
    days and the raw per-fold scores alongside the means.
    """
    if aggregate_groups:
        cases = _aggregate_series(cases)
    t = _series_len(cases)
    first = max(t // 2, 8)
    last = t - horizon
    if last <= first:
        raise InputError("series too short for the requested horizon")
    origins = np.unique(np.linspace(first, last, n_origins).astype(int))
    totals = _total_counts(cases)
    scores = {kind: [] for kind in kinds}
    for origin in origins:
        origin = int(origin)
        train = _truncate(cases, origin)
        obs = totals[origin:origin + horizon]
        for kind in kinds:
            if kind == "behavioral":
                model = fit(train, schedule, fit_config, mixing=mixing)
                pred = forecast(model, schedule, _train_counts(train), horizon)
            else:
                spec = fit_baseline(kind, train, schedule)
                pred = forecast_baseline(spec, _total_counts(train), horizon)
            scores[kind].append(rmse(pred, obs))
    means = {kind: float(np.mean(v)) for kind, v in scores.items()}
    if per_fold:
        return {"mean": means,
                "origins": [int(o) for o in origins],
                "folds": {k: [float(x) for x in v]
                          for k, v in scores.items()}}
    return means


def ood_eval(
    cases: CaseSeries,
    schedule: InterventionSchedule,
    train_days: int,
    fit_config: FitConfig,
) -> dict:
    """Train on the pre-shift window, score on the post-shift window.

    Returns per model kind: in-sample RMSE on the training window,
    out-of-sample RMSE on the test window, and the relative degradation
    (oos / in_sample - 1) as a percentage.
    """
    t = len(cases)
    if not (0 < train_days < t):
        raise InputError("train_days must split the series")
    train = _truncate(cases, train_days)
    obs_test = cases.counts[train_days:]
    horizon = t - train_days

    rows = {}
    model = fit(train, schedule, fit_config)
    pred_in = _fitted_path(model, schedule, train)
    pred_out = forecast(model, schedule, train.counts, horizon)
    rows["behavioral"] = _ood_row(pred_in, train.counts, pred_out, obs_test)

    ab_cfg = replace(fit_config, disable_compliance=True)
    model_nc = fit(train, schedule, ab_cfg)
    pred_in = _fitted_path(model_nc, schedule, train)
    pred_out = forecast(model_nc, schedule, train.counts, horizon)
    rows["no_compliance"] = _ood_row(pred_in, train.counts, pred_out, obs_test)

    for kind in BASELINE_KINDS:
        spec = fit_baseline(kind, train, schedule)
        from .baselines import simulate_baseline
        pred_in = simulate_baseline(spec, train_days,
                                    observed_counts=train.counts)
        pred_out = forecast_baseline(spec, train.counts, horizon)
        rows[kind] = _ood_row(pred_in, train.counts, pred_out, obs_test)
    return rows


def _fitted_path(model, schedule, train):
    from .predict import simulate_model
    traj = simulate_model(model, schedule, len(train),
                          observed_counts=train.counts)
    return traj.total_incidence


def _ood_row(pred_in, obs_in, pred_out, obs_out):
    in_rmse = rmse(pred_in, obs_in)
    out_rmse = rmse(pred_out, obs_out)
    return {
        "in_sample_rmse": in_rmse,
        "oos_rmse": out_rmse,
        "degradation_pct": float((out_rmse / in_rmse - 1.0) * 100.0)
        if in_rmse > 0 else float("inf"),
    }


ABLATION_TOGGLES = (
    "disable_constraints",
    "disable_policy",
    "disable_media",
    "disable_compliance",
    "single_group",
)


def ablation_table(
    cases,
    schedule: InterventionSchedule,
    fit_config: FitConfig,
    horizon: int = 7,
    n_origins: int = 3,
    mixing: np.ndarray | None = None,
) -> dict:
    """Rolling-origin forecast RMSE for the full model and each single-toggle
    ablation; reported as absolute RMSE and the increase over the full model.

    The single_group toggle collapses a multi-group dataset to its aggregate
    before fitting (a no-op degradation on single-group data).
    """
    def score(cfg, aggregate=False):
        out = rolling_origin_rmse(cases, schedule, cfg, horizon=horizon,
                                  n_origins=n_origins, kinds=("behavioral",),
                                  mixing=None if aggregate else mixing,
                                  aggregate_groups=aggregate)
        return out["behavioral"]

    full = score(fit_config)
    table = {"full": {"rmse": full, "rmse_increase_pct": 0.0}}
    for toggle in ABLATION_TOGGLES:
        if toggle == "single_group":
            val = score(fit_config, aggregate=True)
        else:
            val = score(replace(fit_config, **{toggle: True}))
        table[toggle] = {
            "rmse": val,
            "rmse_increase_pct": float((val / full - 1.0) * 100.0),
        }
    return table


def block_length_sensitivity(
    cases: CaseSeries,
    schedule: InterventionSchedule,
    scenario: Scenario,
    fit_config: FitConfig,
    block_lengths=(3, 5, 7, 10),
    n_replicas: int = 100,
    seed: int = 0,
    metric: str = "cases_averted",
    model=None,
    replica_start=None,
) -> dict:
    """CI width and bounds for the same scenario across bootstrap block
    lengths; all runs reuse one fitted model. replica_start is forwarded to
    block_bootstrap for warm-starting the replica refits."""
    if model is None:
        model = fit(cases, schedule, fit_config)
    rows = {}
    for b in block_lengths:
        cfg = BootstrapConfig(n_replicas=n_replicas, block_length=b, seed=seed)
        summary = block_bootstrap(cases, schedule, scenario, cfg, fit_config,
                                  model=model, replica_start=replica_start)
        lo, hi = summary.ci[metric]
        rows[b] = {"ci": [lo, hi], "width": float(hi - lo),
                   "n_dropped": summary.n_dropped}
    return rows
