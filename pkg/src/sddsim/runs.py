"""Run orchestration shared by the HTTP service and the CLI.

Each runner takes a validated RunConfig, executes one command end to end
and returns a pydantic result whose ``report`` echoes the configuration,
its content hash, the per-suite results and the captured warning events.
Reports serialize with sorted keys; everything except the optional
``timing_s`` field is a pure function of (config, seed).
"""
from __future__ import annotations

import math
import time
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict

from . import __version__
from .config import ConfigError, RunConfig, build_problem, config_hash
from .delay import verify_ignorance
from .events import capture_events
from .history import HistorySegment
from .operators import NicholsonNonlinearity
from .solver import mild_residual, solve
from .verify import (
    WellPosednessConstants,
    continuous_dependence_probe,
    dissipation_probe,
    hadamard_report,
    holder_regularity_probe,
    uniqueness_probe,
)

__all__ = [
    "RunReport",
    "SimulateResult",
    "CheckDelayResult",
    "VerifyResult",
    "AttractorResult",
    "Suite",
    "simulate_run",
    "check_delay_run",
    "verify_run",
    "attractor_run",
    "report_json",
]

Suite = Literal["ignorance", "uniqueness", "dependence", "attractor", "all"]


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class RunReport(_Model):
    schema_version: int = 1
    command: str
    sddsim_version: str = __version__
    config: RunConfig
    config_hash: str
    results: dict[str, Any]
    warnings: list[dict[str, Any]]
    timing_s: float | None = None


class ResidualPayload(_Model):
    max_defect: float
    sample_times: list[float]


class SimulateResult(_Model):
    report: RunReport
    csv: str
    residual: ResidualPayload | None = None


class CheckDelayResult(_Model):
    report: RunReport
    passed: bool


class VerifyResult(_Model):
    report: RunReport
    passed: bool


class AttractorResult(_Model):
    report: RunReport
    passed: bool


def _sanitize(obj: Any) -> Any:
    """Make results JSON-safe: non-finite floats become None."""
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _sanitize(obj.tolist())
    return obj


def _report(
    command: str,
    cfg: RunConfig,
    results: dict[str, Any],
    warnings: list,
    t_start: float | None,
) -> RunReport:
    return RunReport(
        command=command,
        config=cfg,
        config_hash=config_hash(cfg),
        results=_sanitize(results),
        warnings=[_sanitize(e.as_dict()) for e in warnings],
        timing_s=(time.perf_counter() - t_start) if t_start is not None else None,
    )


def report_json(result: _Model) -> str:
    """Stable-key-order UTF-8 JSON for a result model."""
    import json

    return json.dumps(result.model_dump(mode="json"), sort_keys=True, indent=2) + "\n"


def _require_seed(cfg: RunConfig, override: int | None, what: str) -> int:
    seed = override if override is not None else cfg.verify.seed
    if seed is None:
        raise ConfigError(f"{what} is stochastic: set [verify].seed or pass --seed")
    return seed


def simulate_run(
    cfg: RunConfig,
    residual: bool = False,
    residual_samples: int = 10,
    include_timing: bool = True,
) -> SimulateResult:
    problem, phi, scfg = build_problem(cfg)
    t0 = time.perf_counter() if include_timing else None
    with capture_events() as events:
        tr = solve(problem, phi, scfg)
        payload = None
        if residual:
            samples = np.linspace(tr.T / residual_samples, tr.T, residual_samples)
            payload = ResidualPayload(
                max_defect=mild_residual(tr, samples), sample_times=[float(s) for s in samples]
            )
    results = {
        "T": tr.T,
        "dt": scfg.dt,
        "rows": int(tr.times.shape[0]),
        "final_norm": tr.eval(tr.T).norm(),
        "max_picard_iterations": int(tr.step_meta.picard_iterations.max(initial=0)),
    }
    if payload is not None:
        results["residual"] = payload.model_dump()
    return SimulateResult(
        report=_report("simulate", cfg, results, events, t0),
        csv=tr.csv_text(),
        residual=payload,
    )


def check_delay_run(
    cfg: RunConfig,
    trials: int | None = None,
    seed: int | None = None,
    include_timing: bool = True,
) -> CheckDelayResult:
    problem, phi, _ = build_problem(cfg)
    seed = _require_seed(cfg, seed, "check-delay")
    trials = trials if trials is not None else cfg.verify.trials
    t0 = time.perf_counter() if include_timing else None
    with capture_events() as events:
        segment = problem.delay.dependency_segment(phi)
        ign = verify_ignorance(problem.delay, phi, trials=trials, seed=seed)
    results = {"segment": segment.as_dict(), "ignorance": ign.as_dict()}
    return CheckDelayResult(
        report=_report("check-delay", cfg, results, events, t0), passed=ign.passes
    )


def _random_member(
    rng: np.random.Generator, phi: HistorySegment, radius: float, nonneg: bool
) -> HistorySegment:
    """Random initial segment with sup norm at most ``radius``.

    PDE members combine the first few sine modes with piecewise-linear
    random mode paths; ODE members take random knot values directly.
    ``nonneg`` folds the values into the nonnegative cone (norm-preserving)
    for population-type nonlinearities that are bounded only there.
    """
    space = phi.space
    thetas = np.linspace(-phi.horizon, 0.0, 9)
    if space.kind == "pde_grid":
        x = space.grid()
        modes = np.stack([np.sin(k * np.pi * x / space.length) for k in range(1, 5)])
        coeffs = rng.uniform(-1.0, 1.0, size=(thetas.shape[0], 4))
        values = coeffs @ modes
    else:
        values = rng.uniform(-1.0, 1.0, size=(thetas.shape[0], space.size))
    if nonneg:
        values = np.abs(values)
    seg = HistorySegment(thetas.copy(), values, space, phi.horizon, validate=False)
    scale = radius * float(rng.uniform(0.2, 1.0)) / max(seg.sup_norm(), 1e-12)
    return HistorySegment(thetas.copy(), values * scale, space, phi.horizon, validate=False)


def _build_ensemble(
    phi: HistorySegment, size: int, radius: float, seed: int, nonneg: bool = False
) -> list[HistorySegment]:
    rng = np.random.default_rng(seed)
    members = [phi]
    while len(members) < size:
        members.append(_random_member(rng, phi, radius, nonneg))
    return members


def _attractor_sections(
    cfg: RunConfig,
    problem,
    phi: HistorySegment,
    scfg,
    seed: int,
    t_long: float | None = None,
    ensemble_size: int | None = None,
) -> dict[str, Any]:
    v = cfg.verify
    t_long = t_long if t_long is not None else v.T_long
    size = ensemble_size if ensemble_size is not None else v.ensemble_size
    # the blowflies birth map is bounded only on nonnegative states, so the
    # ensemble stays in the population cone there
    nonneg = isinstance(problem.nonlinearity, NicholsonNonlinearity)
    ensemble = _build_ensemble(phi, size, v.ensemble_radius, seed, nonneg=nonneg)
    try:
        diag = dissipation_probe(problem, scfg, ensemble, t_long)
    except Exception as exc:
        return {
            "dissipation": {"pass": False, "error": str(exc)},
            "holder": {"pass": False, "error": "skipped: no dissipation diagnostics"},
        }
    sections: dict[str, Any] = {"dissipation": diag.as_dict()}
    sections["dissipation"]["pass"] = diag.dissipation_observed
    try:
        holder = holder_regularity_probe(diag, pairs=v.holder_pairs, seed=seed)
        sections["holder"] = holder.as_dict()
        sections["holder"]["pass"] = math.isfinite(holder.l_tilde_estimate)
    except Exception as exc:
        sections["holder"] = {"pass": False, "error": str(exc)}
    return sections


def verify_run(
    cfg: RunConfig,
    suite: Suite = "all",
    seed: int | None = None,
    include_timing: bool = True,
) -> VerifyResult:
    problem, phi, scfg = build_problem(cfg)
    seed = _require_seed(cfg, seed, f"verify --suite {suite}")
    v = cfg.verify
    t0 = time.perf_counter() if include_timing else None
    sections: dict[str, Any] = {}
    with capture_events() as events:
        if suite in ("ignorance",):
            rep = verify_ignorance(problem.delay, phi, trials=v.trials, seed=seed)
            sections["ignorance"] = rep.as_dict()
            sections["ignorance"]["pass"] = rep.passes
        elif suite == "uniqueness":
            sections["uniqueness"] = uniqueness_probe(
                problem, phi, scfg, n_variants=v.n_variants, seed=seed
            ).as_dict()
        elif suite == "dependence":
            sections["dependence"] = continuous_dependence_probe(
                problem,
                phi,
                scfg,
                WellPosednessConstants(omega=v.omega, q=v.q),
                n_perturbations=v.n_perturbations,
                eps=v.epsilon,
                seed=seed,
                bound_slack=v.bound_slack,
            ).as_dict()
        elif suite == "attractor":
            sections.update(_attractor_sections(cfg, problem, phi, scfg, seed))
        else:  # all
            report = hadamard_report(
                problem,
                phi,
                scfg,
                WellPosednessConstants(omega=v.omega, q=v.q),
                seed=seed,
                n_variants=v.n_variants,
                n_perturbations=v.n_perturbations,
                eps=v.epsilon,
                ignorance_trials=v.trials,
            )
            sections.update(report["sections"])
            sections.update(_attractor_sections(cfg, problem, phi, scfg, seed))
    passed = all(bool(sec.get("pass", False)) for sec in sections.values())
    results = {"suite": suite, "seed": seed, "sections": sections, "pass": passed}
    return VerifyResult(report=_report("verify", cfg, results, events, t0), passed=passed)


def attractor_run(
    cfg: RunConfig,
    t_long: float | None = None,
    ensemble_size: int | None = None,
    seed: int | None = None,
    include_timing: bool = True,
) -> AttractorResult:
    problem, phi, scfg = build_problem(cfg)
    seed = _require_seed(cfg, seed, "attractor")
    t0 = time.perf_counter() if include_timing else None
    with capture_events() as events:
        sections = _attractor_sections(
            cfg, problem, phi, scfg, seed, t_long=t_long, ensemble_size=ensemble_size
        )
    passed = bool(sections["dissipation"]["pass"]) and bool(sections["holder"].get("pass"))
    results = {"seed": seed, "sections": sections, "pass": passed}
    return AttractorResult(report=_report("attractor", cfg, results, events, t0), passed=passed)
