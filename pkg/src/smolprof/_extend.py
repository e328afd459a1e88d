"""Off-node evaluation of grid functions and sub-grid quadrature.

A grid function is evaluated between nodes by four-point Lagrange
interpolation in the grid's natural coordinate. Left of the first node it
is continued either by zero or by a sum of power laws fitted to the
leftmost nodes; right of the last node it is zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .grid import GEOMETRIC, Grid, GridFunction


def left_power_fit(g: GridFunction):
    """``(c, p)`` with ``g(y) ~ c y**p`` near the first node, or None."""
    v0, v1 = g.values[0], g.values[1]
    if not (v0 != 0 and v1 != 0 and (v0 > 0) == (v1 > 0)):
        return None
    y0, y1 = g.grid.nodes[0], g.grid.nodes[1]
    p = math.log(v1 / v0) / math.log(y1 / y0)
    with np.errstate(over="ignore", divide="ignore", under="ignore"):
        c = float(v0 / np.power(y0, p))
    if not (math.isfinite(c) and c != 0.0):
        return None
    return c, p


def right_power_fit(g: GridFunction):
    """``(c, p)`` with ``g(y) ~ c y**p`` near the last node, or None."""
    v0, v1 = g.values[-2], g.values[-1]
    if not (v0 != 0 and v1 != 0 and (v0 > 0) == (v1 > 0)):
        return None
    y0, y1 = g.grid.nodes[-2], g.grid.nodes[-1]
    p = math.log(v1 / v0) / math.log(y1 / y0)
    # a steep fit (fast decay) can overflow y1**p; such a tail is negligible anyway
    with np.errstate(over="ignore", divide="ignore"):
        c = float(v1 / np.power(y1, p))
    if not (math.isfinite(c) and c != 0.0):
        return None
    return c, p


def _power_integral(c, e, a, b):
    # c * int_a^b z**(e-1) dz
    if abs(e) < 1e-12:
        return c * (np.log(b) - np.log(a))
    with np.errstate(divide="ignore"):
        return c * (np.power(b, e) - np.power(a, e)) / e


@dataclass(frozen=True)
class PowerTail:
    """``sum_k c_k z**p_k`` used for ``0 < z < y_0``."""

    terms: tuple = ()

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        out = np.zeros_like(z)
        for c, p in self.terms:
            out = out + c * np.power(z, p)
        return out

    def integral(self, a, b, q: float = 0.0):
        """``int_a^b z**q * tail(z) dz``; ``a`` may be 0 when convergent."""
        a = np.asarray(a, dtype=float)
        out = np.zeros(np.broadcast(a, np.asarray(b)).shape)
        for c, p in self.terms:
            e = p + q + 1.0
            if e <= 0 and np.any(a == 0):
                return np.full_like(out, np.inf)
            out = out + _power_integral(c, e, a, b)
        return out

    def shifted(self, q: float) -> "PowerTail":
        """Tail of ``z**q * f``."""
        return PowerTail(tuple((c, p + q) for c, p in self.terms))


def power_tail_of(g: GridFunction) -> PowerTail:
    fit = left_power_fit(g)
    return PowerTail(() if fit is None else (fit,))


def lagrange4(grid: Grid, z: np.ndarray):
    """Stencil indices and weights for 4-point interpolation at ``z``."""
    xi = np.log(z) if grid.kind == GEOMETRIC else z
    t = (xi - grid.coords[0]) / grid.step
    i0 = np.clip(np.floor(t).astype(np.int64) - 1, 0, grid.n - 4)
    u = t - i0
    w = np.stack(
        [
            -(u - 1) * (u - 2) * (u - 3) / 6.0,
            u * (u - 2) * (u - 3) / 2.0,
            -u * (u - 1) * (u - 3) / 2.0,
            u * (u - 1) * (u - 2) / 6.0,
        ],
        axis=-1,
    )
    idx = i0[..., None] + np.arange(4)
    return idx, w


class Sampler:
    """Precomputed interpolation stencils for a fixed set of points ``z``.

    Reused across iterations so that solvers pay for the stencil search once.
    """

    def __init__(self, grid: Grid, z):
        z = np.asarray(z, dtype=float)
        self.grid = grid
        self.z = z
        lo, hi = grid.y_min * (1 - 1e-12), grid.y_max * (1 + 1e-12)
        self.inside = (z >= lo) & (z <= hi)
        self.low = (z < lo) & (z > 0)
        self.zlow = z[self.low]
        if np.any(self.inside):
            self.idx, self.w = lagrange4(grid, np.clip(z[self.inside], grid.y_min, grid.y_max))
        else:
            self.idx = self.w = None

    def __call__(self, values: np.ndarray, tail: "PowerTail") -> np.ndarray:
        out = np.zeros(self.z.shape)
        if self.idx is not None:
            out[self.inside] = np.sum(values[self.idx] * self.w, axis=-1)
        if self.zlow.size and tail.terms:
            out[self.low] = tail(self.zlow)
        return out


@lru_cache(maxsize=32)
def node_integral_plan(grid: Grid, m: int):
    """Sub-grid and sampler for ``int_{y_i}^{y_max}`` at every node ``y_i``."""
    y = np.asarray(grid.nodes)
    z, w = log_simpson(y, np.full_like(y, grid.y_max), m)
    return w, Sampler(grid, z)


class Extension:
    """A grid function made evaluable at every ``z > 0``."""

    def __init__(self, g: GridFunction, tail: PowerTail | None = None, left: str = "power"):
        self.g = g
        self.grid = g.grid
        if tail is None:
            tail = power_tail_of(g) if left == "power" else PowerTail()
        self.tail = tail

    def __call__(self, z) -> np.ndarray:
        return Sampler(self.grid, z)(self.g.values, self.tail)

    def sample(self, sampler: Sampler) -> np.ndarray:
        return sampler(self.g.values, self.tail)

    def integral_from_nodes(self, m: int) -> np.ndarray:
        """``int_{y_i}^{y_max} f`` at every node, with a cached plan."""
        w, smp = node_integral_plan(self.grid, m)
        return np.sum(w * self.sample(smp), axis=-1)

    def integral_from(self, x, m: int) -> np.ndarray:
        """``int_x^{y_max} f`` for each entry of ``x`` (power tail below ``y_0``)."""
        x = np.asarray(x, dtype=float)
        y0 = self.grid.y_min
        lo = np.maximum(x, y0)
        z, w = log_simpson(lo, np.full_like(lo, self.grid.y_max), m)
        out = np.sum(w * self(z), axis=-1)
        below = x < y0
        if np.any(below):
            out[below] += self.tail.integral(x[below], y0)
        return out


def log_simpson(a, b, m: int):
    """Nodes and weights of composite Simpson in ``log z`` on each ``[a_i, b_i]``.

    ``m`` is the (even) number of sub-intervals; rows with ``a_i >= b_i``
    get zero weights.
    """
    if m % 2:
        m += 1
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ok = b > a
    la = np.log(np.where(ok, a, 1.0))
    lb = np.log(np.where(ok, b, 1.0))
    frac = np.linspace(0.0, 1.0, m + 1)
    s = la[..., None] + (lb - la)[..., None] * frac
    z = np.exp(s)
    c = np.ones(m + 1)
    c[1:-1:2] = 4.0
    c[2:-1:2] = 2.0
    ds = (lb - la) / m
    w = (ds / 3.0)[..., None] * c * z
    w[~ok] = 0.0
    return z, w


def subgrid_size(grid: Grid, span: float) -> int:
    """Even Simpson count whose step in ``log z`` is at most the grid's."""
    if grid.kind == GEOMETRIC:
        ds = grid.step
    else:
        ds = 1.0 / grid.n
    m = int(math.ceil(span / ds))
    return max(8, m + (m % 2))
