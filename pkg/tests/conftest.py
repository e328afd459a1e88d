import functools
import warnings

import numpy as np
import pytest

from smolprof import profiles
from smolprof.grid import GridFunction, make_geometric_grid, make_uniform_grid
from smolprof.kernel import KernelSpec

MATRIX = [(0.0, 0.0), (0.0, 0.2), (-0.3, 0.3), (-0.5, 0.5), (-0.5, 0.0)]


@functools.lru_cache(maxsize=None)
def solved(alpha, beta):
    """Converged profile on the default grid, shared by all test modules."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return profiles.solve(KernelSpec.single(alpha, beta))


@pytest.fixture(scope="session")
def solution():
    return solved


@pytest.fixture(scope="session")
def geo():
    return profiles.default_grid()


@pytest.fixture
def dense():
    return make_geometric_grid(1e-6, 60.0, 1024)


def exp_on(grid, a=1.0):
    return GridFunction(grid, np.exp(-a * grid.nodes))


def bump(c, w):
    """Smooth compactly supported bump on (c - w, c + w) and its derivative."""

    def f(x):
        x = np.asarray(x, dtype=float)
        t = (x - c) / w
        out = np.zeros_like(x)
        m = np.abs(t) < 1
        out[m] = np.exp(-1.0 / (1.0 - t[m] ** 2))
        return out

    def df(x):
        x = np.asarray(x, dtype=float)
        t = (x - c) / w
        out = np.zeros_like(x)
        m = np.abs(t) < 1
        s = 1.0 - t[m] ** 2
        out[m] = np.exp(-1.0 / s) * (-2.0 * t[m] / s**2) / w
        return out

    return f, df


def uniform(y_max, n):
    return make_uniform_grid(y_max, n)


def half_indicator(y):
    """``1/2`` on ``[0, 2]``, smoothed over a width 0.1 (mass ~1)."""
    return 0.25 * (1.0 - np.tanh((np.asarray(y) - 2.0) / 0.1))


@functools.lru_cache(maxsize=None)
def uniqueness(alpha, beta):
    from smolprof import analyzer

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return analyzer.uniqueness_experiment(KernelSpec.single(alpha, beta), 1.0,
                                              [None, half_indicator])
