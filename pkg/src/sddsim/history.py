"""State vectors, history segments and trajectories.

The phase space is C([-r,0]; X) where X is either R^n (ODE systems) or the
values of a field on the uniform interior grid of (0, ell) with homogeneous
Dirichlet boundary. Histories are piecewise linear in time between knots;
that is exactly the representation the stepper propagates, so knot-based
sup norms and Lipschitz quotients are exact for the stored representative.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "SpaceMeta",
    "StateVector",
    "HistorySegment",
    "SegmentView",
    "Trajectory",
    "HistoryError",
    "DomainError",
    "ode_space",
    "pde_space",
    "make_history",
]


class HistoryError(ValueError):
    """Invalid construction of a history object."""


class DomainError(ValueError):
    """Evaluation outside the time domain of a segment or trajectory."""


@dataclass(frozen=True)
class SpaceMeta:
    """Tags a state as ODE components or PDE grid samples.

    For ``pde_grid`` the values live at the interior points
    x_j = j*length/(size+1), j=1..size, and the L2 norm uses the rectangle
    weight length/(size+1), consistent with the sine-spectral transform.
    """

    kind: str  # "ode" | "pde_grid"
    size: int
    length: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("ode", "pde_grid"):
            raise HistoryError(f"unknown space kind {self.kind!r}")
        if self.size < 1:
            raise HistoryError("space size must be >= 1")
        if self.kind == "pde_grid":
            if self.length is None or self.length <= 0:
                raise HistoryError("pde_grid space needs a positive length")

    @property
    def quad_weight(self) -> float:
        if self.kind == "pde_grid":
            return self.length / (self.size + 1)
        return 1.0

    def grid(self) -> np.ndarray:
        """Interior grid points (pde_grid only)."""
        if self.kind != "pde_grid":
            raise HistoryError("grid() is only defined for pde_grid spaces")
        return np.arange(1, self.size + 1) * (self.length / (self.size + 1))

    def norm(self, values: np.ndarray) -> float:
        """Euclidean norm (ode) or quadrature-weighted L2 norm (pde_grid)."""
        s = float(np.dot(values, values))
        return float(np.sqrt(self.quad_weight * s)) if self.kind == "pde_grid" else float(np.sqrt(s))

    def mean(self, values: np.ndarray) -> float:
        """Quadrature mean: (1/|domain|) * integral for pde_grid, plain mean for ode."""
        if self.kind == "pde_grid":
            return float(values.sum() / (self.size + 1))
        return float(values.mean())


def ode_space(n: int) -> SpaceMeta:
    return SpaceMeta("ode", n)


def pde_space(n_grid: int, ell: float) -> SpaceMeta:
    return SpaceMeta("pde_grid", n_grid, float(ell))


def _as_values(values: Iterable[float]) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise HistoryError("state values must be one-dimensional")
    return arr


@dataclass(frozen=True)
class StateVector:
    """Finite-dimensional state: ODE components or PDE field samples."""

    values: np.ndarray
    space: SpaceMeta

    def __post_init__(self) -> None:
        arr = _as_values(self.values)
        if arr.shape[0] != self.space.size:
            raise HistoryError(
                f"state has {arr.shape[0]} entries, space expects {self.space.size}"
            )
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise HistoryError(f"non-finite state entry at index {bad}")
        object.__setattr__(self, "values", arr)

    def norm(self) -> float:
        return self.space.norm(self.values)

    def mean(self) -> float:
        return self.space.mean(self.values)

    def _check_space(self, other: "StateVector") -> None:
        if self.space != other.space:
            raise HistoryError("cannot combine states with mismatched space metadata")

    def __add__(self, other: "StateVector") -> "StateVector":
        self._check_space(other)
        return StateVector(self.values + other.values, self.space)

    def __sub__(self, other: "StateVector") -> "StateVector":
        self._check_space(other)
        return StateVector(self.values - other.values, self.space)

    def __mul__(self, alpha: float) -> "StateVector":
        return StateVector(self.values * float(alpha), self.space)

    __rmul__ = __mul__


def _interp_rows(times: np.ndarray, values: np.ndarray, t: float) -> np.ndarray:
    """Piecewise-linear evaluation, exact at knots (returns the stored row)."""
    idx = int(np.searchsorted(times, t))
    if idx < times.shape[0] and times[idx] == t:
        return values[idx]
    # t strictly between times[idx-1] and times[idx]
    t0, t1 = times[idx - 1], times[idx]
    w = (t - t0) / (t1 - t0)
    return (1.0 - w) * values[idx - 1] + w * values[idx]


def _interp_many(times: np.ndarray, values: np.ndarray, ts: np.ndarray) -> np.ndarray:
    # side="right" makes the weight exactly 0.0 at knots, so knot values are exact
    idx = np.clip(np.searchsorted(times, ts, side="right"), 1, times.shape[0] - 1)
    t0 = times[idx - 1]
    t1 = times[idx]
    w = (ts - t0) / (t1 - t0)
    return (1.0 - w)[:, None] * values[idx - 1] + w[:, None] * values[idx]


_TIME_TOL = 1e-12


class HistorySegment:
    """A function on [-r, 0], piecewise linear between strictly increasing knots."""

    __slots__ = ("times", "values", "space", "horizon")

    def __init__(
        self,
        times: np.ndarray,
        values: np.ndarray,
        space: SpaceMeta,
        horizon: float,
        validate: bool = True,
    ) -> None:
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if validate:
            times = times.copy()  # endpoint snapping must not touch caller arrays
            self._validate(times, values, space, horizon)
        self.times = times
        self.values = values
        self.space = space
        self.horizon = float(horizon)

    @staticmethod
    def _validate(times: np.ndarray, values: np.ndarray, space: SpaceMeta, horizon: float) -> None:
        if horizon <= 0:
            raise HistoryError("horizon must be positive")
        if times.ndim != 1 or times.shape[0] == 0:
            raise HistoryError("empty knots")
        if values.shape != (times.shape[0], space.size):
            raise HistoryError(
                f"values shape {values.shape} does not match {times.shape[0]} knots of size {space.size}"
            )
        diffs = np.diff(times)
        if np.any(diffs <= 0):
            bad = int(np.flatnonzero(diffs <= 0)[0]) + 1
            raise HistoryError(f"unsorted times at knot index {bad}")
        tol = _TIME_TOL * max(1.0, horizon)
        if abs(times[0] + horizon) > tol:
            raise HistoryError(f"first knot time {times[0]} must equal -{horizon}")
        if abs(times[-1]) > tol:
            raise HistoryError(f"last knot time {times[-1]} must equal 0")
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values).all(axis=1))[0])
            raise HistoryError(f"non-finite value at knot index {bad}")
        # snap the endpoints so domain checks are exact
        times[0] = -horizon
        times[-1] = 0.0

    @property
    def knot_times(self) -> np.ndarray:
        return self.times

    def _check_theta(self, theta: float) -> float:
        theta = float(theta)
        if theta < -self.horizon - _TIME_TOL * max(1.0, self.horizon) or theta > _TIME_TOL:
            raise DomainError(f"theta={theta} outside [-{self.horizon}, 0]")
        return min(max(theta, -self.horizon), 0.0)

    def eval_values(self, theta: float) -> np.ndarray:
        return _interp_rows(self.times, self.values, self._check_theta(theta))

    def eval(self, theta: float) -> StateVector:
        return StateVector(self.eval_values(theta), self.space)

    def eval_many(self, thetas: np.ndarray) -> np.ndarray:
        thetas = np.asarray(thetas, dtype=float)
        if thetas.size and (thetas.min() < -self.horizon - _TIME_TOL or thetas.max() > _TIME_TOL):
            raise DomainError("theta values outside segment domain")
        return _interp_many(self.times, self.values, np.clip(thetas, -self.horizon, 0.0))

    def sup_norm(self) -> float:
        """Sup norm of the piecewise-linear representative, attained at a knot."""
        if self.space.kind == "pde_grid":
            sq = np.einsum("ij,ij->i", self.values, self.values) * self.space.quad_weight
        else:
            sq = np.einsum("ij,ij->i", self.values, self.values)
        return float(np.sqrt(sq.max()))

    def lipschitz_quotient(self) -> float:
        """Exact Lipschitz constant of the piecewise-linear representative."""
        if self.times.shape[0] < 2:
            raise HistoryError("lipschitz_quotient needs at least two knots")
        dv = np.diff(self.values, axis=0)
        if self.space.kind == "pde_grid":
            norms = np.sqrt(np.einsum("ij,ij->i", dv, dv) * self.space.quad_weight)
        else:
            norms = np.sqrt(np.einsum("ij,ij->i", dv, dv))
        return float((norms / np.diff(self.times)).max())


def make_history(
    knots: Sequence[tuple[float, StateVector]], horizon: float
) -> HistorySegment:
    """Build a segment from (time, StateVector) knots on [-r, 0].

    Times must be strictly increasing with first knot at -horizon and last
    at 0; all values must share the same space metadata.
    """
    if not knots:
        raise HistoryError("empty knots")
    space = knots[0][1].space
    for i, (_, v) in enumerate(knots):
        if v.space != space:
            raise HistoryError(f"mismatched space_meta at knot index {i}")
    times = np.array([float(t) for t, _ in knots])
    values = np.stack([v.values for _, v in knots])
    return HistorySegment(times, values, space, float(horizon))


class SegmentView:
    """Read-only window theta -> u(t+theta) over trajectory storage.

    Duck-compatible with HistorySegment for evaluation (``eval``,
    ``eval_values``, ``horizon``, ``space``, ``knot_times``) without
    materializing a new segment; used in the stepping loop. An optional
    provisional endpoint extends the committed data to the end of the step
    currently being resolved.
    """

    __slots__ = ("_phi", "_times", "_values", "_count", "_t", "_extra", "horizon", "space")

    def __init__(
        self,
        phi: HistorySegment,
        times: np.ndarray,
        values: np.ndarray,
        count: int,
        t: float,
        extra: tuple[float, np.ndarray] | None = None,
    ) -> None:
        self._phi = phi
        self._times = times
        self._values = values
        self._count = count  # committed knots are times[:count]
        self._t = float(t)
        self._extra = extra
        self.horizon = phi.horizon
        self.space = phi.space

    def eval_values(self, theta: float) -> np.ndarray:
        theta = float(theta)
        if theta < -self.horizon - _TIME_TOL or theta > _TIME_TOL:
            raise DomainError(f"theta={theta} outside [-{self.horizon}, 0]")
        t = self._t + min(max(theta, -self.horizon), 0.0)
        if t <= 0.0:
            return self._phi.eval_values(max(t, -self.horizon))
        last = self._times[self._count - 1]
        if t <= last:
            return _interp_rows(self._times[: self._count], self._values[: self._count], t)
        if self._extra is None:
            raise DomainError(f"time {t} beyond committed trajectory")
        te, ve = self._extra
        if t >= te:
            return ve
        w = (t - last) / (te - last)
        return (1.0 - w) * self._values[self._count - 1] + w * ve

    def eval(self, theta: float) -> StateVector:
        return StateVector(self.eval_values(theta), self.space)

    def eval_many(self, thetas: np.ndarray) -> np.ndarray:
        thetas = np.asarray(thetas, dtype=float)
        ts = self._t + np.clip(thetas, -self.horizon, 0.0)
        out = np.empty((ts.shape[0], self.space.size))
        past = ts <= 0.0
        if past.any():
            out[past] = self._phi.eval_many(np.maximum(ts[past], -self.horizon))
        fresh = ~past
        if fresh.any():
            last = self._times[self._count - 1]
            inside = fresh & (ts <= last)
            if inside.any():
                out[inside] = _interp_many(
                    self._times[: self._count], self._values[: self._count], ts[inside]
                )
            beyond = fresh & (ts > last)
            if beyond.any():
                if self._extra is None:
                    raise DomainError("time beyond committed trajectory")
                te, ve = self._extra
                w = np.clip((ts[beyond] - last) / (te - last), 0.0, 1.0)
                out[beyond] = (1.0 - w)[:, None] * self._values[self._count - 1] + w[:, None] * ve
        return out

    @property
    def knot_times(self) -> np.ndarray:
        lo = self._t - self.horizon
        parts = [self._phi.times[self._phi.times >= lo - _TIME_TOL]] if self._t - self.horizon <= 0 else []
        committed = self._times[: self._count]
        sel = committed[(committed > max(lo, 0.0)) & (committed <= self._t)]
        parts.append(sel)
        if self._extra is not None and self._extra[0] <= self._t:
            parts.append(np.array([self._extra[0]]))
        ts = np.concatenate(parts) if parts else np.array([])
        thetas = np.clip(ts - self._t, -self.horizon, 0.0)
        thetas = np.unique(np.concatenate([thetas, [-self.horizon, 0.0]]))
        return thetas


class Trajectory:
    """A solved path u on [-r, T]: initial segment plus values on the solver grid."""

    def __init__(
        self,
        problem: object,
        initial: HistorySegment,
        times: np.ndarray,
        values: np.ndarray,
        step_meta: "StepMeta | None" = None,
    ) -> None:
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times[0] != 0.0:
            raise HistoryError("trajectory must start at t=0")
        if np.any(np.diff(times) <= 0):
            raise HistoryError("trajectory times must be strictly increasing")
        if not np.array_equal(values[0], initial.eval_values(0.0)):
            raise HistoryError("trajectory value at t=0 must equal phi(0)")
        self.problem = problem
        self.initial = initial
        self.times = times
        self.values = values
        self.step_meta = step_meta
        self.space = initial.space
        self.horizon = initial.horizon

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def eval_values(self, t: float) -> np.ndarray:
        t = float(t)
        if t < -self.horizon - _TIME_TOL or t > self.T + _TIME_TOL:
            raise DomainError(f"t={t} outside [-{self.horizon}, {self.T}]")
        if t <= 0.0:
            return self.initial.eval_values(max(t, -self.horizon))
        return _interp_rows(self.times, self.values, min(t, self.T))

    def eval(self, t: float) -> StateVector:
        return StateVector(self.eval_values(t), self.space)

    def window_view(self, t: float) -> SegmentView:
        return SegmentView(self.initial, self.times, self.values, self.times.shape[0], t)

    def window(self, t: float) -> HistorySegment:
        """Materialize the segment theta -> u(t+theta); window(0) reproduces phi."""
        t = float(t)
        if t < -_TIME_TOL or t > self.T + _TIME_TOL:
            raise DomainError(f"window time {t} outside [0, {self.T}]")
        t = min(max(t, 0.0), self.T)
        lo = t - self.horizon
        src: list[float] = []
        vals: list[np.ndarray] = []
        if lo < 0.0:
            mask = self.initial.times >= lo - _TIME_TOL
            for s, v in zip(self.initial.times[mask], self.initial.values[mask]):
                src.append(float(s))
                vals.append(v)
        mask = (self.times > max(lo, 0.0) + _TIME_TOL) & (self.times <= t + _TIME_TOL)
        for s, v in zip(self.times[mask], self.values[mask]):
            src.append(float(s))
            vals.append(v)
        if not src or src[0] > lo + _TIME_TOL:
            src.insert(0, lo)
            vals.insert(0, self.eval_values(lo))
        else:
            src[0] = lo
        if src[-1] < t - _TIME_TOL:
            src.append(t)
            vals.append(self.eval_values(t))
        else:
            src[-1] = t
            vals[-1] = self.eval_values(t)
        times = np.asarray(src) - t
        keep = np.concatenate([[True], np.diff(times) > _TIME_TOL])
        times = times[keep]
        values = np.stack([v for v, k in zip(vals, keep) if k])
        times[0] = -self.horizon
        times[-1] = 0.0
        return HistorySegment(times, values, self.space, self.horizon, validate=False)

    def csv_text(self) -> str:
        """CSV with header t,v_0,...,v_{n-1}; initial-segment knots (t<0) first."""
        n = self.space.size
        lines = ["t," + ",".join(f"v_{i}" for i in range(n))]
        for s, row in zip(self.initial.times, self.initial.values):
            if s < 0.0:
                lines.append(",".join([repr(float(s))] + [repr(float(x)) for x in row]))
        for s, row in zip(self.times, self.values):
            lines.append(",".join([repr(float(s))] + [repr(float(x)) for x in row]))
        return "\n".join(lines) + "\n"

    def to_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.csv_text())


@dataclass
class StepMeta:
    """Per-step bookkeeping recorded by the solver."""

    dt: float
    picard_iterations: np.ndarray
    delay_values: np.ndarray
    notes: list[str]
