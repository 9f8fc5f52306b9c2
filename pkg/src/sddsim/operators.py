"""Spatial operator, shifted semigroup and delayed nonlinearities.

The linear part is a self-adjoint positive operator plus a constant shift
d >= 0, applied exactly through its spectrum: for ODE systems the operator
is diagonal; for 1-D Dirichlet diffusion the eigenpairs are
(nu*(k*pi/ell)^2 + d, sin(k*pi*x/ell)) and the semigroup acts mode-by-mode
through the type-I discrete sine transform. Nonlinearities cover pointwise
maps, quadrature convolutions with a bounded kernel, and the blowflies
birth function b(w) = p*w*exp(-w).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.fft import dst, idst

from . import events
from .history import DomainError, HistoryError, SpaceMeta, StateVector, ode_space, pde_space

__all__ = [
    "EvolutionOperator",
    "Nonlinearity",
    "LocalNonlinearity",
    "NonlocalNonlinearity",
    "NicholsonNonlinearity",
    "ZeroNonlinearity",
    "build_dirichlet_laplacian",
    "build_ode_diag",
    "gaussian_kernel",
    "lipschitz_bound",
    "slope_bound",
]


@dataclass(frozen=True)
class EvolutionOperator:
    """Spectral data of A + d*I with exact semigroup application."""

    kind: str  # "ode_diag" | "pde_dirichlet"
    eigenvalues: np.ndarray  # eigenvalues of A (without the shift), increasing for pde
    shift: float
    space: SpaceMeta

    def __post_init__(self) -> None:
        object.__setattr__(self, "eigenvalues", np.asarray(self.eigenvalues, dtype=float))
        if self.shift < 0:
            raise ValueError("shift d must be nonnegative")

    @property
    def shifted_eigenvalues(self) -> np.ndarray:
        return self.eigenvalues + self.shift

    def _check(self, t: float, v: StateVector) -> None:
        if t < 0:
            raise DomainError("semigroup is forward-only: t must be >= 0")
        if v.space != self.space:
            raise HistoryError("state space does not match operator space")

    def semigroup_values(self, t: float, values: np.ndarray) -> np.ndarray:
        lam = self.shifted_eigenvalues
        if self.kind == "ode_diag":
            return np.exp(-lam * t) * values
        coeffs = dst(values, type=1)
        return idst(np.exp(-lam * t) * coeffs, type=1)

    def semigroup_apply(self, t: float, v: StateVector) -> StateVector:
        """Apply exp(-(A + d*I) t) to v."""
        self._check(t, v)
        return StateVector(self.semigroup_values(float(t), v.values), self.space)

    def phi1_values(self, dt: float, values: np.ndarray) -> np.ndarray:
        """Apply (1 - exp(-(A+dI) dt)) * (A+dI)^{-1}, the exponential-Euler weight.

        Uses expm1 plus a series branch for tiny lambda*dt so the factor
        degrades gracefully to dt at lambda = 0 without cancellation.
        """
        lam = self.shifted_eigenvalues
        z = lam * dt
        small = np.abs(z) < 1e-10
        lam_safe = np.where(small, 1.0, lam)
        factor = np.where(small, dt * (1.0 - 0.5 * z), -np.expm1(-z) / lam_safe)
        if self.kind == "ode_diag":
            return factor * values
        return idst(factor * dst(values, type=1), type=1)


def build_ode_diag(eigenvalues: np.ndarray | list[float], d: float = 0.0) -> EvolutionOperator:
    eig = np.asarray(eigenvalues, dtype=float)
    return EvolutionOperator("ode_diag", eig, float(d), ode_space(eig.shape[0]))


def build_dirichlet_laplacian(
    n_modes: int, ell: float, nu: float, d: float = 0.0
) -> EvolutionOperator:
    """nu times the 1-D Dirichlet Laplacian on (0, ell), shifted by d.

    Grid size equals n_modes; eigenvalues nu*(k*pi/ell)^2 are exact for the
    sine modes sampled at the interior grid, so the semigroup is exact on
    the band-limited interpolant.
    """
    if n_modes < 1 or ell <= 0 or nu <= 0:
        raise ValueError("n_modes, ell and nu must be positive")
    k = np.arange(1, n_modes + 1)
    eig = nu * (k * np.pi / ell) ** 2
    return EvolutionOperator("pde_dirichlet", eig, float(d), pde_space(n_modes, ell))


def gaussian_kernel(alpha: float) -> Callable[[np.ndarray], np.ndarray]:
    """f(s) = (4*pi*alpha)^(-1/2) * exp(-s^2 / (4*alpha))."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    c = 1.0 / math.sqrt(4.0 * math.pi * alpha)

    def f(s: np.ndarray) -> np.ndarray:
        return c * np.exp(-np.square(s) / (4.0 * alpha))

    return f


_EXP_SAT = 700.0  # exp argument beyond which b(w) = p w e^{-w} would overflow


def _nicholson_b(p: float, w: np.ndarray) -> np.ndarray:
    if np.any(-w > _EXP_SAT):
        events.record(
            "nicholson_saturation",
            "blowflies nonlinearity saturated for large negative state",
            min_w=float(np.min(w)),
        )
        w = np.maximum(w, -_EXP_SAT)
    return p * w * np.exp(-w)


class Nonlinearity:
    """Base for delayed nonlinearities B: state -> state."""

    bounded: bool = False

    def apply_values(self, values: np.ndarray, space: SpaceMeta) -> np.ndarray:
        raise NotImplementedError

    def apply(self, v: StateVector) -> StateVector:
        return StateVector(self.apply_values(v.values, v.space), v.space)

    def pointwise_slope_bound(self, lo: float, hi: float) -> float:
        """Max |b'| of the pointwise map on [lo, hi], by dense sampling."""
        raise NotImplementedError

    def kernel_factor(self, space: SpaceMeta) -> float:
        """M_f * |domain| for convolution types, 1 for pointwise types."""
        return 1.0


@dataclass
class ZeroNonlinearity(Nonlinearity):
    """B identically zero (pure decay problems)."""

    bounded: bool = True

    def apply_values(self, values: np.ndarray, space: SpaceMeta) -> np.ndarray:
        return np.zeros_like(values)

    def pointwise_slope_bound(self, lo: float, hi: float) -> float:
        return 0.0


@dataclass
class LocalNonlinearity(Nonlinearity):
    """B(v)(x) = b(v(x)) for a scalar map b applied componentwise."""

    b: Callable[[np.ndarray], np.ndarray]
    lipschitz_b: float | None = None
    bounded: bool = False

    def apply_values(self, values: np.ndarray, space: SpaceMeta) -> np.ndarray:
        return np.asarray(self.b(values), dtype=float)

    def pointwise_slope_bound(self, lo: float, hi: float) -> float:
        if self.lipschitz_b is not None:
            return self.lipschitz_b
        return slope_bound(self.b, lo, hi)


class _ConvolutionMixin:
    """Quadrature convolution (Bv)(x_i) = h * sum_j b(v_j) f(x_i - x_j)."""

    def _matrix(self, space: SpaceMeta) -> np.ndarray:
        if space.kind != "pde_grid":
            raise HistoryError("convolution nonlinearity needs a pde_grid space")
        key = (space.size, space.length)
        cached = self._mat_cache.get(key)
        if cached is None:
            x = space.grid()
            cached = np.asarray(self.kernel(x[:, None] - x[None, :]), dtype=float) * space.quad_weight
            self._mat_cache[key] = cached
        return cached

    def kernel_factor(self, space: SpaceMeta) -> float:
        if space.kind != "pde_grid":
            raise HistoryError("convolution nonlinearity needs a pde_grid space")
        # M_f sampled on the difference set (-ell, ell); kernel assumed evaluable pointwise
        diffs = np.linspace(-space.length, space.length, 4097)
        m_f = float(np.max(np.abs(self.kernel(diffs))))
        return m_f * space.length


@dataclass
class NonlocalNonlinearity(_ConvolutionMixin, Nonlinearity):
    """B(v)(x) = integral over the domain of b(v(y)) f(x-y) dy."""

    b: Callable[[np.ndarray], np.ndarray]
    kernel: Callable[[np.ndarray], np.ndarray]
    lipschitz_b: float | None = None
    bounded: bool = False
    _mat_cache: dict = field(default_factory=dict, repr=False)

    def apply_values(self, values: np.ndarray, space: SpaceMeta) -> np.ndarray:
        return self._matrix(space) @ np.asarray(self.b(values), dtype=float)

    def pointwise_slope_bound(self, lo: float, hi: float) -> float:
        if self.lipschitz_b is not None:
            return self.lipschitz_b
        return slope_bound(self.b, lo, hi)


@dataclass
class NicholsonNonlinearity(_ConvolutionMixin, Nonlinearity):
    """Blowflies birth term b(w) = p*w*exp(-w), optionally convolved.

    kernel=None is the Dirac (local) form; a callable kernel gives the
    space-nonlocal form. b is bounded on w >= 0 by p/e.
    """

    p: float
    kernel: Callable[[np.ndarray], np.ndarray] | None = None
    bounded: bool = True
    _mat_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if self.p <= 0:
            raise ValueError("p must be positive")

    def apply_values(self, values: np.ndarray, space: SpaceMeta) -> np.ndarray:
        bw = _nicholson_b(self.p, values)
        if self.kernel is None:
            return bw
        return self._matrix(space) @ bw

    def kernel_factor(self, space: SpaceMeta) -> float:
        if self.kernel is None:
            return 1.0
        return _ConvolutionMixin.kernel_factor(self, space)

    def pointwise_slope_bound(self, lo: float, hi: float) -> float:
        return self.p * slope_bound(lambda w: w * np.exp(-np.maximum(w, -_EXP_SAT)), lo, hi)


def slope_bound(b: Callable[[np.ndarray], np.ndarray], lo: float, hi: float, samples: int = 20001) -> float:
    """Max |b'| on [lo, hi] estimated from dense central differences."""
    if hi < lo:
        lo, hi = hi, lo
    if hi == lo:
        hi = lo + 1e-8
    w = np.linspace(lo, hi, samples)
    y = np.asarray(b(w), dtype=float)
    return float(np.max(np.abs(np.diff(y) / np.diff(w))))


def lipschitz_bound(nl: Nonlinearity, range_bound: float, space: SpaceMeta | None = None) -> float:
    """Lipschitz constant of B on states with entries in the working range.

    Local maps: L_b on [-R, R]. Convolutions: L_b * M_f * |domain| with M_f
    the sampled kernel maximum. The blowflies map uses the nonnegative
    working range [0, R] (its slope there is at most 1, attained at w=0);
    for signed ranges use ``lipschitz_bound_on``.
    """
    if range_bound <= 0:
        raise ValueError("range_bound must be positive")
    if isinstance(nl, NicholsonNonlinearity):
        return lipschitz_bound_on(nl, 0.0, range_bound, space)
    return lipschitz_bound_on(nl, -range_bound, range_bound, space)


def lipschitz_bound_on(
    nl: Nonlinearity, lo: float, hi: float, space: SpaceMeta | None = None
) -> float:
    """Lipschitz constant of B for states with entries in [lo, hi]."""
    l_b = nl.pointwise_slope_bound(lo, hi)
    needs_kernel = isinstance(nl, NonlocalNonlinearity) or (
        isinstance(nl, NicholsonNonlinearity) and nl.kernel is not None
    )
    if needs_kernel:
        if space is None:
            raise ValueError("convolution nonlinearity needs the space to bound the kernel")
        return l_b * nl.kernel_factor(space)
    return l_b
