"""Command-line entry points for the calibration, forecasting, evaluation
and counterfactual workflows, plus the local scenario service.

Every output artifact embeds the run seed, a hash of the effective
configuration, and the model-file schema version, so reruns with identical
inputs are byte-identical and diffable.
"""

from __future__ import annotations

import csv
import hashlib
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

import click
import numpy as np

from . import io as eio
from .baselines import BASELINE_KINDS
from .calibration import FitConfig, fit
from .counterfactual import (
    BootstrapConfig,
    Scenario,
    block_bootstrap,
    evaluate_scenario,
)
from .errors import EpiloopError, InputError
from .evaluation import ablation_table, ood_eval, rolling_origin_rmse
from .io import (
    MODEL_SCHEMA_VERSION,
    canonical_json,
    compile_schedule,
    load_case_csv,
    load_events,
    load_model,
    save_model,
)
from .predict import forecast, simulate_model
from .synthetic import (
    default_grid,
    grid_summary,
    ood_dataset,
    run_experiment_grid,
)


def _config_hash(payload: dict) -> str:
    digest = hashlib.sha256(canonical_json(payload).encode()).hexdigest()
    return digest[:16]


def _envelope(seed: int, config: dict, body: dict) -> dict:
    return {
        "schema_version": MODEL_SCHEMA_VERSION,
        "seed": seed,
        "config_hash": _config_hash(config),
        **body,
    }


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(canonical_json(payload) + "\n")


def _fail(exc: Exception) -> None:
    """Machine-readable error record on stderr, nonzero exit."""
    record = {"error": type(exc).__name__, "message": str(exc)}
    for attr in ("line", "iteration"):
        if getattr(exc, attr, None) is not None:
            record[attr] = getattr(exc, attr)
    click.echo(json.dumps(record, sort_keys=True), err=True)
    sys.exit(1)


def _load_inputs(cases_path, events_path):
    series = load_case_csv(cases_path)
    first = series[0] if isinstance(series, list) else series
    events = load_events(events_path) if events_path else []
    schedule, dropped = compile_schedule(events, first.dates[0], len(first))
    return series, schedule, events, dropped


def _series_summary(series) -> dict:
    first = series[0] if isinstance(series, list) else series
    total = float(np.nansum(np.sum(
        [np.nan_to_num(s.counts) for s in series], axis=0
    ))) if isinstance(series, list) else float(np.nansum(series.counts))
    population = sum(s.population for s in series) \
        if isinstance(series, list) else series.population
    return {
        "start": first.dates[0].isoformat(),
        "days": len(first),
        "total_cases": total,
        "population": population,
        "groups": [s.group for s in series] if isinstance(series, list)
        else None,
    }


def _fit_config(seed, optimizer, restarts, max_iters, **overrides) -> FitConfig:
    return FitConfig(seed=seed, optimizer=optimizer, n_restarts=restarts,
                     max_iters=max_iters, **overrides)


@click.group()
def main():
    """Behavior-in-the-loop epidemic modeling toolkit."""


_common = [
    click.option("--seed", type=int, default=0, show_default=True),
    click.option("--output-dir", type=click.Path(path_type=Path),
                 default=Path("."), show_default=True),
]


def common_options(fn):
    for opt in reversed(_common):
        fn = opt(fn)
    return fn


fit_options = [
    click.option("--optimizer", type=click.Choice(["lbfgs", "pgd"]),
                 default="lbfgs", show_default=True),
    click.option("--restarts", type=int, default=4, show_default=True),
    click.option("--max-iters", type=int, default=500, show_default=True),
]


def with_fit_options(fn):
    for opt in reversed(fit_options):
        fn = opt(fn)
    return fn


@main.command()
@click.option("--cases", required=True, type=click.Path(exists=True))
@click.option("--events", type=click.Path(), default=None,
              help="Event-record JSON; omit for a neutral schedule.")
@click.option("--folds", type=int, default=5, show_default=True)
@click.option("--fold-horizon", type=int, default=2, show_default=True)
@with_fit_options
@common_options
def calibrate(cases, events, folds, fold_horizon, optimizer, restarts,
              max_iters, seed, output_dir):
    """Fit the behavioral model; write the model file, a per-fold RMSE
    report, and the fitted multiplier time series."""
    try:
        if events and not Path(events).exists():
            raise InputError(f"event file not found: {events}")
        series, schedule, _, dropped = _load_inputs(cases, events)
        config = _fit_config(seed, optimizer, restarts, max_iters)
        cfg_payload = asdict(config)
        output_dir.mkdir(parents=True, exist_ok=True)

        model = fit(series, schedule, config)
        model.fit_diagnostics["seed"] = seed
        model.fit_diagnostics["config_hash"] = _config_hash(cfg_payload)
        save_model(output_dir / "model.json", model)

        report = rolling_origin_rmse(series, schedule, config,
                                     horizon=fold_horizon, n_origins=folds,
                                     per_fold=True)
        _write_json(output_dir / "report.json", _envelope(seed, cfg_payload, {
            "dataset": _series_summary(series),
            "rolling_origin": report,
            "dropped_low_confidence_events": len(dropped),
            "fit_diagnostics": {
                k: v for k, v in model.fit_diagnostics.items()
                if k != "loss_history"
            },
        }))

        first = series[0] if isinstance(series, list) else series
        counts = np.column_stack([s.counts for s in series]) \
            if isinstance(series, list) else series.counts
        traj = simulate_model(model, schedule, len(first),
                              observed_counts=counts)
        with (output_dir / "multipliers.csv").open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["date", "group", "m_policy", "m_media",
                             "m_comp", "compliance", "risk"])
            for day, d in enumerate(first.dates):
                for k, grp in enumerate(model.groups):
                    writer.writerow([
                        d.isoformat(), grp,
                        f"{traj.m_policy[day, k]:.6f}",
                        f"{traj.m_media[day]:.6f}",
                        f"{traj.m_comp[day, k]:.6f}",
                        f"{traj.compliance[day, k]:.6f}",
                        f"{traj.risk[day]:.6f}",
                    ])
        click.echo(f"model, report and multipliers written to {output_dir}")
    except EpiloopError as exc:
        _fail(exc)


@main.command("forecast")
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True))
@click.option("--cases", required=True, type=click.Path(exists=True))
@click.option("--events", type=click.Path(exists=True), default=None)
@click.option("--horizon", type=int, default=7, show_default=True)
@common_options
def forecast_cmd(model_path, cases, events, horizon, seed, output_dir):
    """Predict incidence beyond the observed series."""
    try:
        model = load_model(model_path, expected_kind="behavioral")
        series, schedule, events_list, _ = _load_inputs(cases, events)
        first = series[0] if isinstance(series, list) else series
        t_obs = len(first)
        # re-compile the schedule out to the forecast end
        schedule, _ = compile_schedule(events_list, first.dates[0],
                                       t_obs + horizon)
        counts = np.column_stack([s.counts for s in series]) \
            if isinstance(series, list) else series.counts
        pred = forecast(model, schedule, counts, horizon)
        cfg = {"model": str(model_path), "horizon": horizon}
        output_dir.mkdir(parents=True, exist_ok=True)
        _write_json(output_dir / "forecast.json", _envelope(seed, cfg, {
            "dataset": _series_summary(series),
            "horizon": horizon,
            "predicted": pred,
        }))
        click.echo(f"forecast written to {output_dir / 'forecast.json'}")
    except EpiloopError as exc:
        _fail(exc)


@main.command()
@click.option("--model", "model_path", required=True,
              type=click.Path(exists=True))
@click.option("--cases", required=True, type=click.Path(exists=True))
@click.option("--events", type=click.Path(exists=True), default=None)
@click.option("--scenario", "scenario_path", required=True,
              type=click.Path(exists=True))
@click.option("--ci/--no-ci", default=False, show_default=True,
              help="Bootstrap confidence intervals (refits B replicas).")
@click.option("--replicas", type=int, default=200, show_default=True)
@click.option("--block-length", type=int, default=7, show_default=True)
@with_fit_options
@common_options
def counterfactual(model_path, cases, events, scenario_path, ci, replicas,
                   block_length, optimizer, restarts, max_iters, seed,
                   output_dir):
    """Evaluate a what-if scenario against the model's factual run."""
    try:
        model = load_model(model_path, expected_kind="behavioral")
        series, schedule, events_list, _ = _load_inputs(cases, events)
        scenario = Scenario.from_payload(
            json.loads(Path(scenario_path).read_text())
        )
        result = evaluate_scenario(model, scenario, schedule,
                                   events=events_list)
        payload = result.to_payload()
        cfg = {"model": str(model_path), "scenario": scenario.to_payload(),
               "ci": ci, "replicas": replicas, "block_length": block_length}
        if ci:
            fit_cfg = _fit_config(seed, optimizer, restarts, max_iters)
            boot = BootstrapConfig(n_replicas=replicas,
                                   block_length=block_length, seed=seed)
            summary = block_bootstrap(series, schedule, scenario, boot,
                                      fit_cfg, model=model,
                                      events=events_list)
            payload["ci"] = summary.ci
            payload["ci_bands"] = summary.traj_band
            payload["n_dropped"] = summary.n_dropped
            payload["n_replicas"] = summary.n_replicas
        output_dir.mkdir(parents=True, exist_ok=True)
        _write_json(output_dir / "counterfactual.json",
                    _envelope(seed, cfg, payload))
        click.echo("counterfactual report written to "
                   f"{output_dir / 'counterfactual.json'}")
    except EpiloopError as exc:
        _fail(exc)


@main.command("synthetic-eval")
@click.option("--cells", type=int, default=None,
              help="Run only the first N grid cells (smoke setting).")
@click.option("--replication", type=int, default=100, show_default=True,
              help="Paired ABM truth replications per cell.")
@click.option("--ci/--no-ci", default=True, show_default=True)
@click.option("--replicas", type=int, default=50, show_default=True)
@with_fit_options
@common_options
def synthetic_eval(cells, replication, ci, replicas, optimizer, restarts,
                   max_iters, seed, output_dir):
    """Score counterfactual recovery on the synthetic ABM grid."""
    try:
        grid = default_grid(base_seed=1000 + seed)
        for exp in grid:
            exp.replication = replication
        if cells is not None:
            grid = grid[:cells]
        fit_cfg = _fit_config(seed, optimizer, restarts, max_iters)
        boot = BootstrapConfig(n_replicas=replicas, block_length=7,
                               seed=seed) if ci else None
        rows = run_experiment_grid(grid, fit_cfg, boot)
        cfg = {"cells": len(grid), "replication": replication, "ci": ci,
               "replicas": replicas, "fit": asdict(fit_cfg)}
        output_dir.mkdir(parents=True, exist_ok=True)
        _write_json(output_dir / "synthetic_eval.json",
                    _envelope(seed, cfg, {
                        "rows": rows,
                        "summary": grid_summary(rows),
                    }))
        click.echo(f"grid results written to "
                   f"{output_dir / 'synthetic_eval.json'}")
    except EpiloopError as exc:
        _fail(exc)


@main.command("ood-eval")
@with_fit_options
@common_options
def ood_eval_cmd(optimizer, restarts, max_iters, seed, output_dir):
    """Distribution-shift stress test: train under mild policy, score under
    a sudden strict lockdown."""
    try:
        series, schedule, train_days = ood_dataset(seed=7)
        fit_cfg = _fit_config(seed, optimizer, restarts, max_iters)
        table = ood_eval(series, schedule, train_days, fit_cfg)
        cfg = {"train_days": train_days, "fit": asdict(fit_cfg)}
        output_dir.mkdir(parents=True, exist_ok=True)
        _write_json(output_dir / "ood_eval.json", _envelope(seed, cfg, {
            "train_days": train_days,
            "table": table,
        }))
        click.echo(f"degradation table written to "
                   f"{output_dir / 'ood_eval.json'}")
    except EpiloopError as exc:
        _fail(exc)


@main.command()
@click.option("--cases", required=True, type=click.Path(exists=True))
@click.option("--events", type=click.Path(exists=True), default=None)
@click.option("--fold-horizon", type=int, default=3, show_default=True)
@click.option("--folds", type=int, default=3, show_default=True)
@with_fit_options
@common_options
def ablate(cases, events, fold_horizon, folds, optimizer, restarts,
           max_iters, seed, output_dir):
    """Single-toggle ablation table over rolling-origin forecast RMSE."""
    try:
        series, schedule, _, _ = _load_inputs(cases, events)
        fit_cfg = _fit_config(seed, optimizer, restarts, max_iters)
        table = ablation_table(series, schedule, fit_cfg,
                               horizon=fold_horizon, n_origins=folds)
        cfg = {"folds": folds, "fold_horizon": fold_horizon,
               "fit": asdict(fit_cfg)}
        output_dir.mkdir(parents=True, exist_ok=True)
        _write_json(output_dir / "ablation.json",
                    _envelope(seed, cfg, {"table": table}))
        click.echo(f"ablation table written to "
                   f"{output_dir / 'ablation.json'}")
    except EpiloopError as exc:
        _fail(exc)


@main.command()
@click.option("--model", "model_paths", multiple=True,
              type=click.Path(exists=True), required=True,
              help="Model file (repeatable); each needs --cases in order.")
@click.option("--cases", "cases_paths", multiple=True,
              type=click.Path(exists=True), required=True)
@click.option("--events", "events_paths", multiple=True,
              type=click.Path(), default=(),
              help="Optional event file per model ('' to skip one).")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8711, show_default=True)
def serve(model_paths, cases_paths, events_paths, host, port):
    """Serve calibrated models to the what-if UI over HTTP."""
    try:
        if len(model_paths) != len(cases_paths):
            raise InputError("--model and --cases must pair up")
        from .service import ModelBundle, create_app

        bundles = {}
        for idx, (mp, cp) in enumerate(zip(model_paths, cases_paths)):
            ep = events_paths[idx] if idx < len(events_paths) else None
            ep = ep or None
            model = load_model(mp, expected_kind="behavioral")
            series, schedule, events_list, _ = _load_inputs(cp, ep)
            bundles[Path(mp).stem] = ModelBundle(
                model=model, series=series, schedule=schedule,
                events=events_list,
            )
        app = create_app(bundles)
        import uvicorn

        uvicorn.run(app, host=host, port=port, log_level="warning")
    except EpiloopError as exc:
        _fail(exc)


if __name__ == "__main__":
    main()
