"""Run configuration: schema, TOML loading and construction of core objects.

One pydantic schema validates both TOML files (the CLI path) and HTTP
request bodies (the service path), so the exact section and field names
are fixed in a single place; docs/config_schema.md documents them. Every
cross-section inconsistency is rejected with a ConfigError before any
computation starts.
"""
from __future__ import annotations

import hashlib
import json
import sys
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .delay import (
    AffineMap,
    ConstantDelay,
    DelayFunctional,
    IntegralInnerDelay,
    IntegralOuterDelay,
    NestedPointDelay,
    ScalarMap,
    SumOfNestedDelay,
    TableMap,
)
from .history import HistorySegment, HistoryError, SpaceMeta, StateVector, make_history
from .operators import (
    EvolutionOperator,
    LocalNonlinearity,
    NicholsonNonlinearity,
    NonlocalNonlinearity,
    Nonlinearity,
    ZeroNonlinearity,
    build_dirichlet_laplacian,
    build_ode_diag,
    gaussian_kernel,
)
from .solver import ProblemSpec, SolverConfig, SolverError

__all__ = [
    "ConfigError",
    "RunConfig",
    "load_config",
    "parse_config",
    "config_hash",
    "build_problem",
    "build_initial_segment",
    "build_solver_config",
]


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class MapModel(_Model):
    kind: Literal["affine", "table"] = "affine"
    lo: float
    hi: float
    a: float = 1.0
    b: float = 0.0
    xs: list[float] | None = None
    ys: list[float] | None = None
    interp: Literal["linear", "step"] = "linear"
    lipschitz: float | None = None


class WeightModel(_Model):
    kind: Literal["constant", "affine"] = "constant"
    value: float = 1.0
    a: float = 0.0
    b: float = 1.0


class KernelModel(_Model):
    kind: Literal["dirac", "gaussian"] = "dirac"
    alpha: float | None = None


class OperatorModel(_Model):
    kind: Literal["ode_diag", "pde_dirichlet"]
    d: float = 0.0
    eigenvalues: list[float] | None = None
    n_modes: int | None = None
    ell: float | None = None
    nu: float | None = None


class NonlinearityModel(_Model):
    kind: Literal["zero", "affine", "nicholson"]
    p: float | None = None
    slope: float | None = None
    intercept: float = 0.0
    kernel: KernelModel = Field(default_factory=KernelModel)


class TermModel(_Model):
    p: MapModel
    chi: MapModel
    anchor: float


class DelayModel(_Model):
    variant: Literal[
        "constant", "nested_point", "sum_of_nested", "integral_outer", "integral_inner"
    ]
    r: float
    c: float | None = None
    p: MapModel | None = None
    chi: MapModel | None = None
    anchor: float | None = None
    terms: list[TermModel] | None = None
    chi1: MapModel | None = None
    chi2: MapModel | None = None
    r1: float | None = None
    r2: float | None = None
    weight: WeightModel | None = None
    integral_dx: float | None = None


class InitialModel(_Model):
    generator: Literal["constant", "ramp", "sine_bump"] | None = None
    knots: list[list] | None = None
    value: float = 0.0
    v0: float = 0.0
    v1: float = 1.0
    amplitude: float = 1.0
    mode: int = 1
    n_knots: int = 33


class SolverModel(_Model):
    dt: float
    T: float
    picard_tol: float = 1e-10
    picard_max_iters: int = 50
    integral_dx: float = 0.01
    record_stride: int = 1


class VerifyModel(_Model):
    omega: float = 0.5
    q: float = 0.5
    epsilon: float = 1e-3
    seed: int | None = None
    trials: int = 1000
    n_variants: int = 5
    n_perturbations: int = 20
    bound_slack: float = 0.05
    T_long: float = 100.0
    ensemble_size: int = 8
    ensemble_radius: float = 10.0
    holder_pairs: int = 200


class RunConfig(_Model):
    schema_version: Literal[1]
    operator: OperatorModel
    nonlinearity: NonlinearityModel
    delay: DelayModel
    initial: InitialModel
    solver: SolverModel
    verify: VerifyModel = Field(default_factory=VerifyModel)


def parse_config(data: dict) -> RunConfig:
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    build_problem(cfg)  # cross-section consistency is rejected before any run
    return cfg


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return parse_config(data)


def config_hash(cfg: RunConfig) -> str:
    """Git-style blob hash of the canonical JSON form of the config.

    Computed over the parsed model (not file bytes), so formatting and
    comments do not change the hash and HTTP submissions hash identically.
    """
    payload = json.dumps(cfg.model_dump(), sort_keys=True, separators=(",", ":"))
    blob = b"blob %d\0%s" % (len(payload), payload.encode())
    return hashlib.sha1(blob).hexdigest()


def _build_map(m: MapModel, r: float, where: str) -> ScalarMap:
    if not (0.0 <= m.lo <= m.hi <= r + 1e-12):
        raise ConfigError(f"{where}: declared range [{m.lo}, {m.hi}] must lie inside [0, {r}]")
    if m.kind == "affine":
        return AffineMap(lo=m.lo, hi=m.hi, a=m.a, b=m.b, lipschitz=m.lipschitz)
    if m.xs is None or m.ys is None:
        raise ConfigError(f"{where}: table map needs xs and ys")
    return TableMap(
        lo=m.lo, hi=m.hi, xs=tuple(m.xs), ys=tuple(m.ys), interp=m.interp, lipschitz=m.lipschitz
    )


def _build_weight(w: WeightModel | None):
    if w is None or w.kind == "constant" and w.value == 1.0:
        return None
    if w.kind == "constant":
        value = w.value
        return lambda theta: np.full_like(np.asarray(theta, dtype=float), value)
    a, b = w.a, w.b
    return lambda theta: a * np.asarray(theta, dtype=float) + b


def build_delay(d: DelayModel, integral_dx: float) -> DelayFunctional:
    r = d.r
    if r <= 0:
        raise ConfigError("delay.r must be positive")
    try:
        if d.variant == "constant":
            if d.c is None:
                raise ConfigError("constant delay needs c")
            return ConstantDelay(d.c, r)
        if d.variant == "nested_point":
            if d.p is None or d.chi is None or d.anchor is None:
                raise ConfigError("nested_point needs p, chi and anchor")
            return NestedPointDelay(
                p=_build_map(d.p, r, "delay.p"),
                chi=_build_map(d.chi, r, "delay.chi"),
                anchor=d.anchor,
                r=r,
            )
        if d.variant == "sum_of_nested":
            if not d.terms:
                raise ConfigError("sum_of_nested needs terms")
            terms = tuple(
                NestedPointDelay(
                    p=_build_map(t.p, r, f"delay.terms[{i}].p"),
                    chi=_build_map(t.chi, r, f"delay.terms[{i}].chi"),
                    anchor=t.anchor,
                    r=r,
                )
                for i, t in enumerate(d.terms)
            )
            return SumOfNestedDelay(terms=terms, r=r)
        # integral variants
        if d.p is None or d.chi1 is None or d.chi2 is None or d.r1 is None or d.r2 is None:
            raise ConfigError(f"{d.variant} needs p, chi1, chi2, r1 and r2")
        kwargs = dict(
            p=_build_map(d.p, r, "delay.p"),
            chi1=_build_map(d.chi1, r, "delay.chi1"),
            chi2=_build_map(d.chi2, r, "delay.chi2"),
            r1=d.r1,
            r2=d.r2,
            r=r,
            integral_dx=d.integral_dx if d.integral_dx is not None else integral_dx,
        )
        weight = _build_weight(d.weight)
        if weight is not None:
            kwargs["weight"] = weight
        cls = IntegralOuterDelay if d.variant == "integral_outer" else IntegralInnerDelay
        return cls(**kwargs)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"delay section: {exc}") from exc


def build_operator(op: OperatorModel) -> EvolutionOperator:
    try:
        if op.kind == "ode_diag":
            if not op.eigenvalues:
                raise ConfigError("ode_diag operator needs eigenvalues")
            return build_ode_diag(op.eigenvalues, op.d)
        if op.n_modes is None or op.ell is None or op.nu is None:
            raise ConfigError("pde_dirichlet operator needs n_modes, ell and nu")
        return build_dirichlet_laplacian(op.n_modes, op.ell, op.nu, op.d)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"operator section: {exc}") from exc


def build_nonlinearity(nl: NonlinearityModel, space: SpaceMeta) -> Nonlinearity:
    kernel = None
    if nl.kernel.kind == "gaussian":
        if nl.kernel.alpha is None or nl.kernel.alpha <= 0:
            raise ConfigError("gaussian kernel needs a positive alpha")
        if space.kind != "pde_grid":
            raise ConfigError("gaussian kernel needs a pde_dirichlet operator")
        kernel = gaussian_kernel(nl.kernel.alpha)
    if nl.kind == "zero":
        return ZeroNonlinearity()
    if nl.kind == "nicholson":
        if nl.p is None or nl.p <= 0:
            raise ConfigError("nicholson nonlinearity needs p > 0")
        return NicholsonNonlinearity(p=nl.p, kernel=kernel)
    if nl.slope is None:
        raise ConfigError("affine nonlinearity needs a slope")
    slope, intercept = nl.slope, nl.intercept
    b = lambda w: slope * w + intercept  # noqa: E731
    if kernel is None:
        return LocalNonlinearity(b=b, lipschitz_b=abs(slope), bounded=(slope == 0.0))
    return NonlocalNonlinearity(b=b, kernel=kernel, lipschitz_b=abs(slope), bounded=(slope == 0.0))


def build_initial_segment(init: InitialModel, space: SpaceMeta, r: float) -> HistorySegment:
    try:
        if init.knots is not None:
            knots = []
            for entry in init.knots:
                if len(entry) != 2:
                    raise ConfigError("each knot must be [time, values]")
                t, vals = entry
                arr = np.atleast_1d(np.asarray(vals, dtype=float))
                if arr.shape[0] == 1 and space.size > 1:
                    arr = np.full(space.size, arr[0])
                knots.append((float(t), StateVector(arr, space)))
            return make_history(knots, r)
        gen = init.generator or "constant"
        thetas = np.linspace(-r, 0.0, max(2, init.n_knots))
        if gen == "constant":
            values = np.full((thetas.shape[0], space.size), init.value)
        elif gen == "ramp":
            line = init.v0 + (thetas + r) / r * (init.v1 - init.v0)
            values = np.repeat(line[:, None], space.size, axis=1)
        else:  # sine_bump
            if space.kind == "pde_grid":
                profile = init.amplitude * np.sin(init.mode * np.pi * space.grid() / space.length)
                values = np.repeat(profile[None, :], thetas.shape[0], axis=0)
            else:
                bump = init.value + init.amplitude * np.sin(np.pi * (thetas + r) / r)
                values = np.repeat(bump[:, None], space.size, axis=1)
        return HistorySegment(thetas.copy(), values, space, r)
    except HistoryError as exc:
        raise ConfigError(f"initial section: {exc}") from exc


def build_solver_config(s: SolverModel) -> SolverConfig:
    try:
        return SolverConfig(
            dt=s.dt,
            T=s.T,
            picard_tol=s.picard_tol,
            picard_max_iters=s.picard_max_iters,
            integral_dx=s.integral_dx,
            record_stride=s.record_stride,
        )
    except SolverError as exc:
        raise ConfigError(str(exc)) from exc


def build_problem(cfg: RunConfig) -> tuple[ProblemSpec, HistorySegment, SolverConfig]:
    """Construct and cross-validate the core objects of a run."""
    operator = build_operator(cfg.operator)
    space = operator.space
    nonlinearity = build_nonlinearity(cfg.nonlinearity, space)
    scfg = build_solver_config(cfg.solver)
    delay = build_delay(cfg.delay, cfg.solver.integral_dx)
    if cfg.solver.dt > cfg.delay.r + 1e-12:
        raise ConfigError("dt exceeds delay horizon")
    phi = build_initial_segment(cfg.initial, space, cfg.delay.r)
    try:
        problem = ProblemSpec(operator, nonlinearity, delay, cfg.delay.r)
    except (HistoryError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return problem, phi, scfg
