"""HTTP service exposing the run commands.

The service is stateless: each request carries a full RunConfig (the same
schema the TOML files use) and returns the corresponding result model.
Configuration problems map to 422, computation failures to 500 with the
diagnostic in ``detail``. Start it with ``sddsim serve`` or point uvicorn
at ``sddsim.service:app``.
"""
from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, ConfigDict

from . import __version__
from .config import ConfigError, RunConfig, parse_config
from .runs import (
    AttractorResult,
    CheckDelayResult,
    SimulateResult,
    Suite,
    VerifyResult,
    attractor_run,
    check_delay_run,
    simulate_run,
    verify_run,
)
from .solver import SolverError
from .verify import VerifyError

__all__ = ["create_app", "app"]


class _Request(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config: RunConfig
    include_timing: bool = True


class SimulateRequest(_Request):
    residual: bool = False
    residual_samples: int = 10


class CheckDelayRequest(_Request):
    trials: int | None = None
    seed: int | None = None


class VerifyRequest(_Request):
    suite: Suite = "all"
    seed: int | None = None


class AttractorRequest(_Request):
    t_long: float | None = None
    ensemble_size: int | None = None
    seed: int | None = None


def _run(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    except (SolverError, VerifyError) as exc:
        raise HTTPException(status_code=500, detail=str(exc)) from exc


def create_app() -> FastAPI:
    app = FastAPI(title="sddsim", version=__version__)

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/simulate", response_model=SimulateResult)
    def simulate(req: SimulateRequest) -> SimulateResult:
        _revalidate(req.config)
        return _run(
            simulate_run,
            req.config,
            residual=req.residual,
            residual_samples=req.residual_samples,
            include_timing=req.include_timing,
        )

    @app.post("/check-delay", response_model=CheckDelayResult)
    def check_delay(req: CheckDelayRequest) -> CheckDelayResult:
        _revalidate(req.config)
        return _run(
            check_delay_run,
            req.config,
            trials=req.trials,
            seed=req.seed,
            include_timing=req.include_timing,
        )

    @app.post("/verify", response_model=VerifyResult)
    def verify(req: VerifyRequest) -> VerifyResult:
        _revalidate(req.config)
        return _run(
            verify_run, req.config, suite=req.suite, seed=req.seed, include_timing=req.include_timing
        )

    @app.post("/attractor", response_model=AttractorResult)
    def attractor(req: AttractorRequest) -> AttractorResult:
        _revalidate(req.config)
        return _run(
            attractor_run,
            req.config,
            t_long=req.t_long,
            ensemble_size=req.ensemble_size,
            seed=req.seed,
            include_timing=req.include_timing,
        )

    return app


def _revalidate(cfg: RunConfig) -> None:
    # field types are already enforced by FastAPI; run the cross-section
    # checks so inconsistent configs 422 before any compute
    try:
        parse_config(cfg.model_dump())
    except ConfigError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


app = create_app()
