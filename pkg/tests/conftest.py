import numpy as np
import pytest

from sddsim import HistorySegment, StateVector, make_history, ode_space


@pytest.fixture
def scalar_space():
    return ode_space(1)


def constant_segment(value: float, r: float = 1.0, n_knots: int = 2) -> HistorySegment:
    sp = ode_space(1)
    ts = np.linspace(-r, 0.0, n_knots)
    return make_history([(t, StateVector([value], sp)) for t in ts], r)


def ramp_segment(v0: float, v1: float, r: float = 1.0, n_knots: int = 21) -> HistorySegment:
    sp = ode_space(1)
    ts = np.linspace(-r, 0.0, n_knots)
    vals = v0 + (ts + r) / r * (v1 - v0)
    return make_history([(t, StateVector([v], sp)) for t, v in zip(ts, vals)], r)


def random_segment(
    rng: np.random.Generator, space=None, r: float = 1.0, n_knots: int = 41, scale: float = 1.0
) -> HistorySegment:
    sp = space if space is not None else ode_space(1)
    ts = np.linspace(-r, 0.0, n_knots)
    vals = rng.uniform(-scale, scale, size=(n_knots, sp.size))
    return HistorySegment(ts, vals, sp, r)
