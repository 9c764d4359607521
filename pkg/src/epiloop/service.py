"""Local scenario service: read-only calibrated models behind a small JSON
API for the what-if UI.

Point counterfactuals are computed synchronously; bootstrap CIs run as
pollable jobs on a bounded worker pool. The model registry is immutable
after startup, so identical (model, scenario, seed) requests produce
identical responses.
"""

from __future__ import annotations

import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse

from .calibration import CalibratedModel, FitConfig
from .counterfactual import (
    BootstrapConfig,
    Scenario,
    block_bootstrap,
    evaluate_scenario,
)
from .errors import EpiloopError
from .io import (
    MODEL_SCHEMA_VERSION,
    CaseSeries,
    EventRecord,
    InterventionSchedule,
    _to_jsonable,
)
from .predict import simulate_model

SERVICE_VERSION = "0.1.0"
MAX_PENDING_JOBS = 4


@dataclass
class ModelBundle:
    """One served model plus the data and schedule it was fitted on."""

    model: CalibratedModel
    series: CaseSeries | list[CaseSeries]
    schedule: InterventionSchedule
    events: list[EventRecord] = field(default_factory=list)

    @property
    def first(self) -> CaseSeries:
        return self.series[0] if isinstance(self.series, list) \
            else self.series

    @property
    def counts(self) -> np.ndarray:
        if isinstance(self.series, list):
            return np.column_stack([s.counts for s in self.series])
        return self.series.counts

    def summary(self) -> dict:
        total = float(np.nansum(self.counts))
        population = sum(s.population for s in self.series) \
            if isinstance(self.series, list) else self.series.population
        return {
            "start": self.first.dates[0].isoformat(),
            "days": len(self.first),
            "total_cases": total,
            "population": population,
            "events": [
                {"kind": e.kind, "date": e.date.isoformat(),
                 "value": e.value, "description": e.description}
                for e in self.events
            ],
        }


def create_app(bundles: dict[str, ModelBundle],
               fit_config: FitConfig | None = None,
               max_pending_jobs: int = MAX_PENDING_JOBS) -> FastAPI:
    app = FastAPI(title="epiloop scenario service")
    fit_config = fit_config or FitConfig(optimizer="lbfgs", n_restarts=2)
    executor = ThreadPoolExecutor(max_workers=2)
    jobs: dict[str, dict] = {}
    jobs_lock = threading.Lock()

    def error(status: int, message: str, **extra) -> JSONResponse:
        return JSONResponse({"error": message, **extra},
                            status_code=status)

    @app.get("/health")
    def health():
        return {"status": "ok", "version": SERVICE_VERSION,
                "schema_version": MODEL_SCHEMA_VERSION}

    @app.get("/models")
    def models():
        return {
            "models": [
                {"id": mid, "kind": b.model.kind, "dataset": b.summary()}
                for mid, b in sorted(bundles.items())
            ]
        }

    @app.get("/models/{model_id}/factual")
    def factual(model_id: str):
        bundle = bundles.get(model_id)
        if bundle is None:
            return error(404, f"unknown model {model_id!r}",
                         known=sorted(bundles))
        horizon = len(bundle.first)
        traj = simulate_model(bundle.model, bundle.schedule, horizon,
                              observed_counts=bundle.counts)
        return _to_jsonable({
            "dates": [d.isoformat() for d in bundle.first.dates],
            "observed": np.nansum(np.atleast_2d(bundle.counts.T).T, axis=1),
            "incidence": traj.total_incidence,
            "m_policy": traj.m_policy.mean(axis=1),
            "m_media": traj.m_media,
            "m_comp": traj.m_comp.mean(axis=1),
            "compliance": traj.compliance.mean(axis=1),
            "risk": traj.risk,
        })

    def run_bootstrap(job_id: str, bundle: ModelBundle, scenario: Scenario,
                      replicas: int, block_length: int, seed: int):
        try:
            boot = BootstrapConfig(n_replicas=replicas,
                                   block_length=block_length, seed=seed)
            summary = block_bootstrap(bundle.series, bundle.schedule,
                                      scenario, boot, fit_config,
                                      model=bundle.model,
                                      events=bundle.events)
            result = _to_jsonable({
                "point": summary.point,
                "ci": summary.ci,
                "ci_bands": summary.traj_band,
                "n_dropped": summary.n_dropped,
                "n_replicas": summary.n_replicas,
            })
            with jobs_lock:
                jobs[job_id] = {"status": "done", "result": result}
        except Exception as exc:  # job errors surface on poll, not in logs
            with jobs_lock:
                jobs[job_id] = {"status": "failed",
                                "error": type(exc).__name__,
                                "message": str(exc)}

    @app.post("/models/{model_id}/counterfactual")
    async def counterfactual(model_id: str, request: Request,
                             ci: bool = Query(default=False),
                             replicas: int = Query(default=50),
                             block_length: int = Query(default=7),
                             seed: int = Query(default=0)):
        bundle = bundles.get(model_id)
        if bundle is None:
            return error(404, f"unknown model {model_id!r}",
                         known=sorted(bundles))
        try:
            payload = await request.json()
            scenario = Scenario.from_payload(payload)
        except (EpiloopError, KeyError, TypeError, ValueError) as exc:
            return error(400, f"invalid scenario: {exc}")

        if ci:
            with jobs_lock:
                pending = sum(1 for j in jobs.values()
                              if j["status"] == "pending")
                if pending >= max_pending_jobs:
                    return error(429, "bootstrap job limit reached",
                                 pending=pending)
                job_id = str(uuid.uuid4())
                jobs[job_id] = {"status": "pending"}
            executor.submit(run_bootstrap, job_id, bundle, scenario,
                            replicas, block_length, seed)
            return {"job_id": job_id, "status": "pending",
                    "poll": f"/jobs/{job_id}"}

        try:
            result = evaluate_scenario(bundle.model, scenario,
                                       bundle.schedule,
                                       events=bundle.events)
        except EpiloopError as exc:
            return error(400, str(exc))
        return _to_jsonable(result.to_payload())

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str):
        with jobs_lock:
            job = jobs.get(job_id)
            if job is None:
                return error(404, f"unknown job {job_id!r}")
            return dict(job)

    return app
