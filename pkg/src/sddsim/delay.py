"""State-dependent delay functionals and their dependency segments.

A delay functional maps a history segment to a delay in [0, r]. The
structured variants below read their argument only inside a state-dependent
"delayed segment" [-theta_upper, -theta_lower] of [-r, 0]; the segment
boundaries are computed symbolically from the same anchor reads the
evaluation uses, so perturbing the history outside the reported segment
provably cannot change the value. ``verify_ignorance`` checks exactly that
by fuzzing, which is also the only tool available for opaque user
functionals.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import events
from .history import HistorySegment, SegmentView, StateVector

__all__ = [
    "ScalarMap",
    "AffineMap",
    "TableMap",
    "UserMap",
    "DelayFunctional",
    "ConstantDelay",
    "NestedPointDelay",
    "SumOfNestedDelay",
    "IntegralOuterDelay",
    "IntegralInnerDelay",
    "OpaqueDelay",
    "SegmentReport",
    "IgnoranceReport",
    "LipschitzEstimate",
    "DelayError",
    "verify_ignorance",
    "estimate_local_lipschitz",
    "agreeing_perturbation",
    "random_bump",
]


class DelayError(ValueError):
    """Invalid delay functional construction or evaluation."""


# ---------------------------------------------------------------------------
# scalar maps: the building blocks delays are composed from


@dataclass(frozen=True)
class ScalarMap:
    """Map from states to reals with a declared range [lo, hi].

    Outputs escaping the declared range are clamped and a warning event is
    recorded; the declared range keeps delays inside [0, r].
    """

    lo: float
    hi: float
    lipschitz: float | None = None

    def __post_init__(self) -> None:
        if not (0.0 <= self.lo <= self.hi):
            raise DelayError(f"declared range [{self.lo}, {self.hi}] must satisfy 0 <= lo <= hi")

    def raw(self, v: StateVector) -> float:
        raise NotImplementedError

    def raw_rows(self, rows: np.ndarray, space) -> np.ndarray:
        # subclasses override with a vectorized form where one exists
        return np.array([self.raw(StateVector(row, space)) for row in rows])

    def __call__(self, v: StateVector) -> float:
        out = float(self.raw(v))
        if not np.isfinite(out):
            raise DelayError("scalar map produced a non-finite value")
        if out < self.lo or out > self.hi:
            events.record(
                "delay_clamp",
                f"scalar map output {out:.6g} clamped into [{self.lo}, {self.hi}]",
                value=out,
            )
            out = min(max(out, self.lo), self.hi)
        return out

    def apply_rows(self, rows: np.ndarray, space) -> np.ndarray:
        out = np.asarray(self.raw_rows(rows, space), dtype=float)
        if not np.all(np.isfinite(out)):
            raise DelayError("scalar map produced a non-finite value")
        escaped = (out < self.lo) | (out > self.hi)
        if escaped.any():
            events.record(
                "delay_clamp",
                f"{int(escaped.sum())} scalar map outputs clamped into [{self.lo}, {self.hi}]",
                count=int(escaped.sum()),
            )
            out = np.clip(out, self.lo, self.hi)
        return out


@dataclass(frozen=True)
class AffineMap(ScalarMap):
    """w -> clamp(a * <mean of w> + b); the mean is the quadrature mean."""

    a: float = 1.0
    b: float = 0.0

    def raw(self, v: StateVector) -> float:
        return self.a * v.mean() + self.b

    def raw_rows(self, rows: np.ndarray, space) -> np.ndarray:
        if space.kind == "pde_grid":
            means = rows.sum(axis=1) / (space.size + 1)
        else:
            means = rows.mean(axis=1)
        return self.a * means + self.b


@dataclass(frozen=True)
class TableMap(ScalarMap):
    """Monotone lookup of the quadrature mean in a breakpoint table.

    interp="linear" interpolates between breakpoints; interp="step" takes
    the value of the last breakpoint below the input (useful for planting
    discontinuities in tests).
    """

    xs: tuple[float, ...] = ()
    ys: tuple[float, ...] = ()
    interp: str = "linear"

    def __post_init__(self) -> None:
        super().__post_init__()
        if len(self.xs) < 2 or len(self.xs) != len(self.ys):
            raise DelayError("table needs matching xs/ys with at least two breakpoints")
        if np.any(np.diff(self.xs) <= 0):
            raise DelayError("table breakpoints must be strictly increasing")
        if self.interp not in ("linear", "step"):
            raise DelayError(f"unknown table interpolation {self.interp!r}")

    def raw(self, v: StateVector) -> float:
        x = v.mean()
        xs = np.asarray(self.xs)
        ys = np.asarray(self.ys)
        if self.interp == "linear":
            return float(np.interp(x, xs, ys))
        idx = int(np.clip(np.searchsorted(xs, x, side="right") - 1, 0, xs.shape[0] - 1))
        return float(ys[idx])

    def raw_rows(self, rows: np.ndarray, space) -> np.ndarray:
        if space.kind == "pde_grid":
            x = rows.sum(axis=1) / (space.size + 1)
        else:
            x = rows.mean(axis=1)
        xs = np.asarray(self.xs)
        ys = np.asarray(self.ys)
        if self.interp == "linear":
            return np.interp(x, xs, ys)
        idx = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, xs.shape[0] - 1)
        return ys[idx]


@dataclass(frozen=True)
class UserMap(ScalarMap):
    """Wraps an arbitrary callable StateVector -> real."""

    fn: Callable[[StateVector], float] = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        super().__post_init__()
        if self.fn is None:
            raise DelayError("user map needs a callable")

    def raw(self, v: StateVector) -> float:
        return float(self.fn(v))


# ---------------------------------------------------------------------------
# delay functionals


@dataclass(frozen=True)
class SegmentReport:
    """Delayed segment [-theta_upper, -theta_lower] plus the anchors read."""

    theta_upper: float
    theta_lower: float
    anchors_used: tuple[float, ...]

    def __post_init__(self) -> None:
        if not (0.0 <= self.theta_lower <= self.theta_upper):
            raise DelayError("segment must satisfy 0 <= theta_lower <= theta_upper")

    def as_dict(self) -> dict:
        return {
            "theta_upper": self.theta_upper,
            "theta_lower": self.theta_lower,
            "anchors_used": list(self.anchors_used),
        }


Segment = HistorySegment | SegmentView


class DelayFunctional:
    """Base: eta maps segments with horizon r into [0, r]."""

    r: float

    def evaluate(self, h: Segment) -> float:
        self._check(h)
        value = self._evaluate(h)
        if not np.isfinite(value):
            raise DelayError("delay evaluation produced a non-finite value")
        if value < 0.0 or value > self.r:
            events.record(
                "delay_clamp",
                f"delay value {value:.6g} clamped into [0, {self.r}]",
                value=float(value),
            )
            value = min(max(value, 0.0), self.r)
        return float(value)

    def dependency_segment(self, h: Segment) -> SegmentReport:
        self._check(h)
        return self._segment(h)

    def _check(self, h: Segment) -> None:
        if abs(h.horizon - self.r) > 1e-12 * max(1.0, self.r):
            raise DelayError(f"segment horizon {h.horizon} does not match delay horizon {self.r}")

    def _evaluate(self, h: Segment) -> float:
        raise NotImplementedError

    def _segment(self, h: Segment) -> SegmentReport:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantDelay(DelayFunctional):
    """eta identically c: ignores its argument entirely."""

    c: float
    r: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.c <= self.r):
            raise DelayError("constant delay must lie in [0, r]")

    def _evaluate(self, h: Segment) -> float:
        return self.c

    def _segment(self, h: Segment) -> SegmentReport:
        return SegmentReport(0.0, 0.0, ())


@dataclass(frozen=True)
class NestedPointDelay(DelayFunctional):
    """eta(phi) = p(phi(-chi(phi(-anchor)))) with anchor in (0, r]."""

    p: ScalarMap
    chi: ScalarMap
    anchor: float
    r: float

    def __post_init__(self) -> None:
        if not (0.0 < self.anchor <= self.r):
            raise DelayError("anchor must lie in (0, r]")
        if self.chi.hi > self.r or self.p.hi > self.r:
            raise DelayError("map ranges must stay within [0, r]")

    def _inner(self, h: Segment) -> float:
        return self.chi(h.eval(-self.anchor))

    def _evaluate(self, h: Segment) -> float:
        return self.p(h.eval(-self._inner(h)))

    def _segment(self, h: Segment) -> SegmentReport:
        c = self._inner(h)
        return SegmentReport(max(self.anchor, c), min(self.anchor, c), (-self.anchor, -c))


@dataclass(frozen=True)
class SumOfNestedDelay(DelayFunctional):
    """eta(phi) = clamp(sum_k p_k(phi(-chi_k(phi(-r_k))))) into [0, r]."""

    terms: tuple[NestedPointDelay, ...]
    r: float

    def __post_init__(self) -> None:
        if not self.terms:
            raise DelayError("sum delay needs at least one term")
        for term in self.terms:
            if abs(term.r - self.r) > 1e-12:
                raise DelayError("all terms must share the max delay r")

    def _evaluate(self, h: Segment) -> float:
        return float(sum(term.p(h.eval(-term._inner(h))) for term in self.terms))

    def _segment(self, h: Segment) -> SegmentReport:
        anchors: list[float] = []
        points: list[float] = []
        for term in self.terms:
            c = term._inner(h)
            anchors.extend((-term.anchor, -c))
            points.extend((term.anchor, c))
        return SegmentReport(max(points), min(points), tuple(anchors))


def _constant_weight(theta: np.ndarray) -> np.ndarray:
    return np.ones_like(theta)


@dataclass(frozen=True)
class _IntegralDelayBase(DelayFunctional):
    """Integral between state-dependent limits -chi2(phi(-r2)) .. -chi1(phi(-r1))."""

    p: ScalarMap
    chi1: ScalarMap
    chi2: ScalarMap
    r1: float
    r2: float
    r: float
    weight: Callable[[np.ndarray], np.ndarray] = _constant_weight
    integral_dx: float = 0.01

    def __post_init__(self) -> None:
        for rk in (self.r1, self.r2):
            if not (0.0 < rk <= self.r):
                raise DelayError("integral anchors must lie in (0, r]")
        if self.integral_dx <= 0:
            raise DelayError("integral_dx must be positive")

    def _limits(self, h: Segment) -> tuple[float, float]:
        c1 = self.chi1(h.eval(-self.r1))
        c2 = self.chi2(h.eval(-self.r2))
        return c1, c2

    def _grid(self, h: Segment, lo: float, hi: float) -> np.ndarray:
        """Quadrature nodes: segment knots inside (lo, hi) refined to <= integral_dx.

        The grid is a deterministic function of the knots inside the open
        integration interval, so histories agreeing there integrate to the
        bitwise-identical value.
        """
        knots = np.asarray(h.knot_times)
        inner = knots[(knots > lo) & (knots < hi)]
        edges = np.concatenate([[lo], inner, [hi]])
        parts = [np.array([lo])]
        for a, b in zip(edges[:-1], edges[1:]):
            n = max(1, int(np.ceil((b - a) / self.integral_dx - 1e-12)))
            parts.append(a + (b - a) * np.arange(1, n + 1) / n)
        return np.concatenate(parts)

    def _integrate(self, h: Segment) -> tuple[float | np.ndarray, float, float]:
        c1, c2 = self._limits(h)
        a, b = -c2, -c1  # oriented: integral from -chi2 to -chi1
        lo, hi = min(a, b), max(a, b)
        if hi - lo < 1e-15:
            zero = 0.0 if isinstance(self, IntegralOuterDelay) else np.zeros(h.space.size)
            return zero, c1, c2
        theta = self._grid(h, lo, hi)
        sign = 1.0 if b >= a else -1.0
        vals = h.eval_many(theta)
        g = np.asarray(self.weight(theta), dtype=float)
        if isinstance(self, IntegralOuterDelay):
            integrand = self.p.apply_rows(vals, h.space) * g
            return sign * float(np.trapezoid(integrand, theta)), c1, c2
        integrand = vals * g[:, None]
        return sign * np.trapezoid(integrand, theta, axis=0), c1, c2

    def _segment(self, h: Segment) -> SegmentReport:
        c1, c2 = self._limits(h)
        points = (self.r1, self.r2, c1, c2)
        return SegmentReport(max(points), min(points), (-self.r1, -self.r2, -c1, -c2))


@dataclass(frozen=True)
class IntegralOuterDelay(_IntegralDelayBase):
    """eta(phi) = clamp( integral of p(phi(theta)) g(theta) dtheta )."""

    def _evaluate(self, h: Segment) -> float:
        value, _, _ = self._integrate(h)
        return float(value)


@dataclass(frozen=True)
class IntegralInnerDelay(_IntegralDelayBase):
    """eta(phi) = p( integral of phi(theta) g(theta) dtheta )."""

    def _evaluate(self, h: Segment) -> float:
        vec, _, _ = self._integrate(h)
        if isinstance(vec, float):
            vec = np.zeros(h.space.size)
        return self.p(StateVector(np.asarray(vec), h.space))


@dataclass(frozen=True)
class OpaqueDelay(DelayFunctional):
    """User-supplied eta with optional declared segment functions.

    Without declared theta_upper/theta_lower the dependency segment is
    unknown and only ``verify_ignorance`` (with a user-supplied segment)
    can gather evidence about the functional.
    """

    fn: Callable[[Segment], float]
    r: float
    theta_upper: Callable[[Segment], float] | None = None
    theta_lower: Callable[[Segment], float] | None = None

    def _evaluate(self, h: Segment) -> float:
        return float(self.fn(h))

    def _segment(self, h: Segment) -> SegmentReport:
        if self.theta_upper is None or self.theta_lower is None:
            raise DelayError(
                "segment unknown for opaque delay; declare theta functions or use verify_ignorance"
            )
        up = float(self.theta_upper(h))
        low = float(self.theta_lower(h))
        return SegmentReport(up, low, ())


# ---------------------------------------------------------------------------
# fuzzing utilities


def random_bump(
    rng: np.random.Generator,
    lo: float,
    hi: float,
    amplitude: float,
    pin_left: bool,
    pin_right: bool,
    n_interior: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Piecewise-linear bump profile with knots inside [lo, hi].

    Returns (times, scalar profile). Pinned ends carry value 0 so the bump
    joins the unperturbed history continuously on that side.
    """
    if n_interior is None:
        n_interior = int(rng.integers(1, 5))
    inner = np.sort(rng.uniform(lo, hi, size=n_interior))
    times = np.concatenate([[lo], inner, [hi]])
    prof = rng.uniform(-1.0, 1.0, size=times.shape[0]) * amplitude
    if pin_left:
        prof[0] = 0.0
    if pin_right:
        prof[-1] = 0.0
    keep = np.concatenate([[True], np.diff(times) > 1e-12])
    return times[keep], prof[keep]


def _apply_bump(
    h: HistorySegment,
    bump_times: np.ndarray,
    bump_prof: np.ndarray,
    direction: np.ndarray,
    zero_outside: tuple[float, float],
) -> HistorySegment:
    """Add a bump (profile x direction) to h, keeping knots inside
    ``zero_outside`` untouched so values there stay bitwise identical."""
    lo, hi = zero_outside
    merged = np.unique(np.concatenate([h.times, bump_times]))
    base = h.eval_many(merged)
    prof = np.zeros(merged.shape[0])
    inside = (merged >= bump_times[0]) & (merged <= bump_times[-1])
    prof[inside] = np.interp(merged[inside], bump_times, bump_prof)
    prof[(merged >= lo) & (merged <= hi)] = 0.0
    values = base + prof[:, None] * direction[None, :]
    return HistorySegment(merged, values, h.space, h.horizon, validate=False)


def _unit_direction(rng: np.random.Generator, h: HistorySegment) -> np.ndarray:
    d = rng.standard_normal(h.space.size)
    n = h.space.norm(d)
    if n == 0.0:
        d = np.ones(h.space.size)
        n = h.space.norm(d)
    return d / n


def agreeing_perturbation(
    rng: np.random.Generator,
    h: HistorySegment,
    segment: SegmentReport,
    amplitude: float = 1.0,
    allow_boundary_pin: bool = False,
) -> HistorySegment | None:
    """Random history equal to h on [-theta_upper, -theta_lower].

    Bump supports are anchored at existing knots of h on the far side of
    the segment boundary, so inside the closed delayed segment the
    perturbed history has exactly the knots and values of h (reads there
    are bitwise identical). With ``allow_boundary_pin`` a sparse history
    may instead be pinned at the exact segment boundary, which perturbs
    reads adjacent to the boundary by interpolation roundoff (~1 ulp) and
    is therefore reserved for tolerance-based checks. Returns None when
    the complement has no room to perturb.
    """
    up, low = segment.theta_upper, segment.theta_lower
    candidates: list[tuple[float, float, bool, bool]] = []
    if (-up) - (-h.horizon) > 1e-9:
        left_knots = h.times[(h.times <= -up) & (h.times > -h.horizon + 1e-9)]
        if left_knots.size:
            candidates.append((-h.horizon, float(left_knots[-1]), False, True))
        elif allow_boundary_pin:
            candidates.append((-h.horizon, -up, False, True))
    if low > 1e-9:
        right_knots = h.times[(h.times >= -low) & (h.times < -1e-9)]
        if right_knots.size:
            candidates.append((float(right_knots[0]), 0.0, True, False))
        elif allow_boundary_pin:
            candidates.append((-low, 0.0, True, False))
    if not candidates:
        return None
    lo, hi, pin_left, pin_right = candidates[int(rng.integers(0, len(candidates)))]
    amp = amplitude * float(rng.uniform(0.2, 1.0))
    times, prof = random_bump(rng, lo, hi, amp, pin_left, pin_right)
    direction = _unit_direction(rng, h)
    return _apply_bump(h, times, prof, direction, (-up, -low))


@dataclass(frozen=True)
class IgnoranceReport:
    """Outcome of fuzzing the state-dependent ignorance condition."""

    passes: bool
    trials: int
    effective_trials: int
    max_deviation: float
    segment: SegmentReport
    counterexample: HistorySegment | None = None

    def as_dict(self) -> dict:
        return {
            "passes": self.passes,
            "trials": self.trials,
            "effective_trials": self.effective_trials,
            "max_deviation": self.max_deviation,
            "segment": self.segment.as_dict(),
            "counterexample_found": self.counterexample is not None,
        }


def verify_ignorance(
    eta: DelayFunctional,
    h: HistorySegment,
    trials: int = 1000,
    seed: int = 0,
    segment: SegmentReport | None = None,
    tol_opaque: float = 1e-12,
) -> IgnoranceReport:
    """Fuzz the ignorance condition: perturbations supported outside the
    delayed segment must leave eta unchanged.

    Structured variants are held to exact equality (their evaluation reads
    only anchor points inside the segment); opaque functionals get
    ``tol_opaque``. Failure is a report outcome, not an exception.
    """
    if segment is None:
        segment = eta.dependency_segment(h)
    opaque = isinstance(eta, OpaqueDelay)
    tol = tol_opaque if opaque else 0.0
    rng = np.random.default_rng(seed)
    base = eta.evaluate(h)
    max_dev = 0.0
    counterexample = None
    effective = 0
    for _ in range(trials):
        psi = agreeing_perturbation(rng, h, segment, allow_boundary_pin=opaque)
        if psi is None:
            continue
        effective += 1
        dev = abs(eta.evaluate(psi) - base)
        if dev > max_dev:
            max_dev = dev
        if dev > tol and counterexample is None:
            counterexample = psi
    return IgnoranceReport(
        passes=counterexample is None,
        trials=trials,
        effective_trials=effective,
        max_deviation=max_dev,
        segment=segment,
        counterexample=counterexample,
    )


@dataclass(frozen=True)
class LipschitzEstimate:
    """Statistical lower estimate of a local Lipschitz constant.

    ``diverging`` is set when pair bisection keeps amplifying the quotient,
    the signature of a functional that is not locally Lipschitz.
    """

    value: float
    pairs: int
    sampled_max: float
    refined_max: float
    diverging: bool

    def __float__(self) -> float:
        return self.value


def _segment_distance(a: HistorySegment, b: HistorySegment) -> float:
    merged = np.unique(np.concatenate([a.times, b.times]))
    diff = a.eval_many(merged) - b.eval_many(merged)
    sq = np.einsum("ij,ij->i", diff, diff)
    if a.space.kind == "pde_grid":
        sq = sq * a.space.quad_weight
    return float(np.sqrt(sq.max()))


def _blend(a: HistorySegment, b: HistorySegment) -> HistorySegment:
    merged = np.unique(np.concatenate([a.times, b.times]))
    vals = 0.5 * (a.eval_many(merged) + b.eval_many(merged))
    return HistorySegment(merged, vals, a.space, a.horizon, validate=False)


def estimate_local_lipschitz(
    eta: DelayFunctional,
    center: HistorySegment,
    radius: float,
    trials: int = 400,
    seed: int = 0,
) -> LipschitzEstimate:
    """Max sampled quotient |eta(phi)-eta(psi)| / ||phi-psi||_C over pairs
    in the radius-ball around ``center``.

    After random sampling, the best pair is repeatedly bisected: a locally
    Lipschitz functional keeps its quotient bounded (the refinement only
    sharpens the estimate), while a jump doubles the quotient with every
    halving of the pair distance, which is reported as ``diverging``.
    """
    if radius <= 0:
        raise DelayError("radius must be positive")
    rng = np.random.default_rng(seed)
    sampled_max = 0.0
    best_pair: tuple[HistorySegment, HistorySegment] | None = None
    used = 0
    for _ in range(trials):
        pair = []
        for _ in range(2):
            times, prof = random_bump(
                rng, -center.horizon, 0.0, radius * float(rng.uniform(0.1, 1.0)), False, False
            )
            direction = _unit_direction(rng, center)
            pair.append(_apply_bump(center, times, prof, direction, (1.0, 0.0)))
        phi1, phi2 = pair
        dist = _segment_distance(phi1, phi2)
        if dist < 1e-14:
            continue
        used += 1
        q = abs(eta.evaluate(phi1) - eta.evaluate(phi2)) / dist
        if q > sampled_max:
            sampled_max = q
            best_pair = (phi1, phi2)

    refined_max = sampled_max
    if best_pair is not None and sampled_max > 0.0:
        phi1, phi2 = best_pair
        for _ in range(40):
            if _segment_distance(phi1, phi2) < 1e-11:
                break
            mid = _blend(phi1, phi2)
            v1, vm, v2 = eta.evaluate(phi1), eta.evaluate(mid), eta.evaluate(phi2)
            d_left = _segment_distance(phi1, mid)
            d_right = _segment_distance(mid, phi2)
            q_left = abs(v1 - vm) / d_left if d_left > 0 else 0.0
            q_right = abs(vm - v2) / d_right if d_right > 0 else 0.0
            if max(q_left, q_right) <= refined_max * 1.0001:
                break
            if q_left >= q_right:
                phi2 = mid
                refined_max = q_left
            else:
                phi1 = mid
                refined_max = q_right

    diverging = refined_max > 5.0 * sampled_max > 0.0
    return LipschitzEstimate(
        value=refined_max,
        pairs=used,
        sampled_max=sampled_max,
        refined_max=refined_max,
        diverging=bool(diverging),
    )
