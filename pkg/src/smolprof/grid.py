"""Discrete size domains, sampled functions, quadrature and moments.

Two grid kinds exist. Geometric grids (constant ratio between nodes) are
used for profile work, where the behaviour at ``y -> 0`` needs logarithmic
resolution. Uniform grids ``h, 2h, ..., n h`` are used by the fractional
calculus operators. Node 0 is never part of a grid; functions are extended
by zero to the left of the first node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ExtrapolationError, InvalidRange, NonFiniteValue

GEOMETRIC = "geometric"
UNIFORM = "uniform"

# Gregory end corrections: trapezoid rule with fourth-order endpoints.
_GREGORY = np.array([3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0])


def _gregory_coefficients(n: int) -> np.ndarray:
    c = np.ones(n)
    c[:3] = _GREGORY
    c[-3:] = _GREGORY[::-1]
    return c


@dataclass(frozen=True)
class Grid:
    """A strictly increasing partition of ``(0, y_max]``.

    Grids are identified by ``(kind, y_min, y_max, n)`` only, so they hash
    cheaply and can key operator caches.
    """

    kind: str
    y_min: float
    y_max: float
    n: int

    @cached_property
    def nodes(self) -> np.ndarray:
        if self.kind == GEOMETRIC:
            s = np.linspace(math.log(self.y_min), math.log(self.y_max), self.n)
            y = np.exp(s)
            y[0], y[-1] = self.y_min, self.y_max
        else:
            y = self.y_min * np.arange(1, self.n + 1, dtype=float)
        y.flags.writeable = False
        return y

    @property
    def ratio(self) -> float:
        if self.kind != GEOMETRIC:
            raise AttributeError("only geometric grids have a ratio")
        return (self.y_max / self.y_min) ** (1.0 / (self.n - 1))

    @property
    def step(self) -> float:
        """Step in the grid's natural coordinate (``log y`` or ``y``)."""
        if self.kind == GEOMETRIC:
            return math.log(self.y_max / self.y_min) / (self.n - 1)
        return self.y_min

    @cached_property
    def coords(self) -> np.ndarray:
        """Natural coordinate of the nodes: ``log y`` or ``y``."""
        c = np.log(self.nodes) if self.kind == GEOMETRIC else np.array(self.nodes)
        c.flags.writeable = False
        return c

    @cached_property
    def weights(self) -> np.ndarray:
        """Positive quadrature weights on ``[y_0, y_{n-1}]``.

        Trapezoid rule in the natural coordinate with Gregory end
        corrections; for geometric grids the Jacobian ``dy = y ds`` is
        folded into the weights.
        """
        w = self.step * _gregory_coefficients(self.n)
        if self.kind == GEOMETRIC:
            w = w * self.nodes
        w.flags.writeable = False
        return w

    @cached_property
    def cell_edges(self) -> np.ndarray:
        """Finite-volume cell boundaries around each node (length n+1)."""
        if self.kind == GEOMETRIC:
            half = math.sqrt(self.ratio)
            e = np.concatenate([self.nodes / half, [self.nodes[-1] * half]])
        else:
            h = self.y_min
            e = np.concatenate([self.nodes - h / 2, [self.nodes[-1] + h / 2]])
        e.flags.writeable = False
        return e

    def scaled(self, factor: float) -> "Grid":
        """The same grid with every node multiplied by ``factor``."""
        if self.kind == GEOMETRIC:
            return Grid(GEOMETRIC, self.y_min * factor, self.y_max * factor, self.n)
        return Grid(UNIFORM, self.y_min * factor, self.y_max * factor, self.n)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "ymin": self.y_min, "ymax": self.y_max, "n": self.n}

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        if d["kind"] == GEOMETRIC:
            return make_geometric_grid(float(d["ymin"]), float(d["ymax"]), int(d["n"]))
        return make_uniform_grid(float(d["ymax"]), int(d["n"]))


def make_geometric_grid(y_min: float, y_max: float, n: int) -> Grid:
    """Geometric grid with ratio ``(y_max / y_min) ** (1 / (n - 1))``."""
    if not (0 < y_min < y_max) or n < 2:
        raise InvalidRange(f"need 0 < y_min < y_max and n >= 2, got ({y_min}, {y_max}, {n})")
    return Grid(GEOMETRIC, float(y_min), float(y_max), int(n))


def make_uniform_grid(y_max: float, n: int) -> Grid:
    """Uniform grid ``h, 2h, ..., n h = y_max`` (node 0 excluded)."""
    if not y_max > 0 or n < 2:
        raise InvalidRange(f"need y_max > 0 and n >= 2, got ({y_max}, {n})")
    return Grid(UNIFORM, float(y_max) / n, float(y_max), int(n))


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Values of a real function at the nodes of a grid.

    The function is taken to vanish to the left of the first node.
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} values, got shape {v.shape}")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, grid: Grid, fn) -> "GridFunction":
        return cls(grid, fn(np.asarray(grid.nodes)))

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes

    def __add__(self, other: "GridFunction") -> "GridFunction":
        return GridFunction(self.grid, self.values + _values_on(self.grid, other))

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        return GridFunction(self.grid, self.values - _values_on(self.grid, other))

    def __mul__(self, c) -> "GridFunction":
        if isinstance(c, GridFunction):
            return GridFunction(self.grid, self.values * _values_on(self.grid, c))
        return GridFunction(self.grid, self.values * c)

    __rmul__ = __mul__

    def __neg__(self) -> "GridFunction":
        return GridFunction(self.grid, -self.values)

    def __len__(self) -> int:
        return self.grid.n


def _values_on(grid: Grid, f: GridFunction) -> np.ndarray:
    if f.grid != grid:
        raise ValueError("grid functions live on different grids")
    return f.values


def moment(g: GridFunction, mu: float) -> float:
    """Quadrature approximation of ``M_mu[g]`` truncated to the grid range."""
    y = g.grid.nodes
    with np.errstate(over="ignore", invalid="ignore"):
        integrand = y**mu * g.values
    if not np.all(np.isfinite(integrand)):
        raise NonFiniteValue(f"y**{mu} * g is not finite at some node")
    # np.dot order is not guaranteed; an explicit cumulative sum is.
    return float(np.cumsum(g.grid.weights * integrand)[-1])


def moment_tails(g: GridFunction, mu: float) -> tuple[float, float]:
    """Estimated contributions of ``(0, y_0)`` and ``(y_max, inf)`` to ``M_mu``.

    Both come from local power-law fits of the two outermost nodes; a
    contribution is reported as 0 when the fit is not integrable or the
    data change sign.
    """
    from ._extend import left_power_fit, right_power_fit

    left = 0.0
    fit = left_power_fit(g)
    if fit is not None:
        c, p = fit
        e = p + mu + 1.0
        if e > 0:
            left = c * g.grid.y_min**e / e
    right = 0.0
    fit = right_power_fit(g)
    if fit is not None:
        c, p = fit
        e = p + mu + 1.0
        if e < 0:
            right = -c * g.grid.y_max**e / e
    return left, right


def moment_with_tail(g: GridFunction, mu: float) -> tuple[float, float]:
    """``(value, tail)``: grid moment plus the truncation estimate, and that estimate."""
    left, right = moment_tails(g, mu)
    tail = left + right
    return moment(g, mu) + tail, tail


def resample(g: GridFunction, target: Grid) -> GridFunction:
    """Piecewise-linear interpolation of ``g`` onto ``target``.

    Linear in ``log y`` for geometric sources and in ``y`` for uniform ones.
    Target nodes left of the source range get the zero extension; nodes
    beyond the source ``y_max`` are an error.
    """
    src = g.grid
    if target == src:
        return GridFunction(target, g.values)
    y = np.asarray(target.nodes)
    if y[-1] > src.y_max * (1.0 + 1e-12):
        raise ExtrapolationError(f"target reaches {y[-1]:g} beyond y_max={src.y_max:g}")
    y = np.minimum(y, src.y_max)
    if src.kind == GEOMETRIC:
        x, xp = np.log(y), src.coords
    else:
        x, xp = y, src.coords
    out = np.interp(x, xp, g.values, left=0.0)
    out[y < src.y_min * (1.0 - 1e-12)] = 0.0
    return GridFunction(target, out)
