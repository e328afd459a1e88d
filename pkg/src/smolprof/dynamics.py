"""Time-dependent coagulation and relaxation in self-similar variables.

``step`` advances ``d_t f = C(f, f)`` with the conservative finite-volume
form of the mass density ``y f``:

    d_t (y f) + d_y F = 0,
    F(y) = int_0^y int_{y-x}^inf x a(x, z) f(x) f(z) dz dx,

on the cells of a geometric grid. Interior fluxes telescope, so the mass
on the grid changes only by the flux through the last edge, which is
recorded. For a separable kernel the inner sums are suffix sums of
``z^e f(z)``, giving ``O(n^2)`` work per step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from . import coagop
from .errors import GridKindError, InvalidRange, NoConvergence, StabilityViolation
from .grid import GEOMETRIC, Grid, GridFunction, resample
from .kernel import KernelSpec


@dataclass(frozen=True)
class EvolutionState:
    f: GridFunction
    t: float = 0.0
    t0: float = 1.0
    mass0: float = 1.0
    outflux: float = 0.0  # mass that left through y_max so far
    defect: float = 0.0  # mass added by clipping negative values

    @classmethod
    def start(cls, f: GridFunction, t0: float = 1.0) -> "EvolutionState":
        if f.grid.kind != GEOMETRIC:
            raise GridKindError("evolution runs on geometric grids")
        return cls(f=f, t=0.0, t0=float(t0), mass0=cell_mass(f))


def cell_mass(f: GridFunction) -> float:
    """``sum_i |cell_i| y_i f_i``, the mass the scheme conserves."""
    return float(np.cumsum(_widths(f.grid) * f.grid.nodes * f.values)[-1])


def cell_number(f: GridFunction) -> float:
    """``sum_i |cell_i| f_i``."""
    return float(np.cumsum(_widths(f.grid) * f.values)[-1])


@lru_cache(maxsize=16)
def _widths(grid: Grid) -> np.ndarray:
    return np.diff(grid.cell_edges)


@lru_cache(maxsize=16)
def _flux_plan(grid: Grid):
    """Cell index and overlap length for ``y_{i+1/2} - x_j``, ``j <= i``."""
    e = np.asarray(grid.cell_edges)
    x = np.asarray(grid.nodes)
    n = grid.n
    upper = e[1:]  # edge i+1/2
    d = upper[:, None] - x[None, :]  # [i, j]
    valid = np.tril(np.ones((n, n), dtype=bool))
    d = np.where(valid, d, e[0])
    # cell a containing d: e[a] <= d < e[a+1]; below the first edge all cells count fully
    a = np.searchsorted(e, d, side="right") - 1
    below = a < 0
    a = np.clip(a, 0, n - 1)
    part = np.where(below, 0.0, e[a + 1] - d)
    return valid, a, below, part


def fluxes(f: GridFunction, k: KernelSpec) -> np.ndarray:
    """Mass fluxes through the upper edge of every cell (length n)."""
    grid = f.grid
    x = np.asarray(grid.nodes)
    w = _widths(grid)
    valid, a, below, part = _flux_plan(grid)
    n = grid.n
    out = np.zeros(n)
    for t in k.terms:
        for p, q in ((t.alpha, t.beta), (t.beta, t.alpha)):
            # x^p y^q: inner sums over z of z^q f(z)
            zq = w * x**q * f.values
            suffix = np.concatenate([np.cumsum(zq[::-1])[::-1], [0.0]])
            # full cells strictly above cell a, plus the overlap with cell a
            inner = np.where(below, suffix[0], suffix[a + 1] + part * x[a] ** q * f.values[a])
            outer = w * x ** (1.0 + p) * f.values  # x_j a-part times f_j |cell_j|
            out += t.weight * np.cumsum(np.where(valid, outer[None, :] * inner, 0.0), axis=1)[:, -1]
    return out


def loss_rate(f: GridFunction, k: KernelSpec) -> np.ndarray:
    """``int a(y, z) f(z) dz`` at the nodes (cell sums)."""
    x = np.asarray(f.grid.nodes)
    w = _widths(f.grid)
    out = np.zeros(f.grid.n)
    for t in k.terms:
        for p, q in ((t.alpha, t.beta), (t.beta, t.alpha)):
            out += t.weight * x**p * np.cumsum(w * x**q * f.values)[-1]
    return out


def stable_dt(f: GridFunction, k: KernelSpec) -> float:
    """Largest ``dt`` with ``dt * max loss rate < 1``."""
    r = float(np.max(loss_rate(f, k)))
    return math.inf if r <= 0 else 1.0 / r


def step(state: EvolutionState, dt: float, k: KernelSpec) -> EvolutionState:
    """One explicit Euler step of the flux form."""
    f = state.f
    if not dt > 0:
        raise InvalidRange("dt must be positive")
    if dt >= stable_dt(f, k):
        raise StabilityViolation(f"dt={dt:g} exceeds the loss-rate bound {stable_dt(f, k):g}")
    grid = f.grid
    x = np.asarray(grid.nodes)
    w = _widths(grid)
    F = fluxes(f, k)
    Fin = np.concatenate([[0.0], F[:-1]])
    mass_cells = w * x * f.values - dt * (F - Fin)
    new = mass_cells / (w * x)
    defect = 0.0
    if np.any(new < 0):
        neg = np.minimum(new, 0.0)
        defect = -float(np.cumsum(w * x * neg)[-1])
        new = np.maximum(new, 0.0)
    return replace(state, f=GridFunction(grid, new), t=state.t + dt,
                   outflux=state.outflux + dt * float(F[-1]), defect=state.defect + defect)


def evolve(state: EvolutionState, k: KernelSpec, t_end: float, cfl: float = 0.05,
           dt: float | None = None, callback=None) -> EvolutionState:
    """Step until ``t_end``; ``dt`` fixed if given, otherwise ``cfl`` times the bound."""
    while state.t < t_end * (1.0 - 1e-15):
        h = dt if dt is not None else cfl * stable_dt(state.f, k)
        h = min(h, t_end - state.t)
        state = step(state, h, k)
        if callback is not None:
            callback(state)
    return state


def scaling_functions(t: float, t0: float, lam: float) -> tuple[float, float]:
    """``(q, p)`` with ``q = (t0 + t)^{-2/(1-lam)}`` and ``p = (t0 + t)^{-1/(1-lam)}``."""
    if not -1 < lam < 1:
        raise InvalidRange("lambda must lie in (-1, 1)")
    if not t + t0 > 0:
        raise InvalidRange("t + t0 must be positive")
    s = t + t0
    return s ** (-2.0 / (1.0 - lam)), s ** (-1.0 / (1.0 - lam))


def rescale_to_profile_frame(state: EvolutionState, lam: float, reference: Grid | None = None) -> GridFunction:
    """``f(t, y / p) / q``, optionally resampled onto ``reference``."""
    q, p = scaling_functions(state.t, state.t0, lam)
    f = state.f
    g = GridFunction(f.grid.scaled(p), f.values / q)
    return g if reference is None else resample(g, reference)


def l11_distance(a: GridFunction, b: GridFunction) -> float:
    """``int y |a - b| dy`` on a shared grid."""
    if a.grid != b.grid:
        raise ValueError("functions live on different grids")
    y = a.grid.nodes
    return float(np.cumsum(a.grid.weights * y * np.abs(a.values - b.values))[-1])


# ---------------------------------------------------------------------------
# relaxation in self-similar variables


@dataclass(frozen=True)
class RelaxOptions:
    """Pseudo-time controls.

    The run stops when the L^1_1 norm of ``d_s g`` (relative to the mass)
    drops below ``tol``. ``upwind_order`` is 1 or 3.
    """

    tol: float = 1e-6
    cfl: float = 0.7
    max_steps: int = 20000
    upwind_order: int = 3


def _upwind(g: np.ndarray, ds: float, order: int) -> np.ndarray:
    """``y g'`` by upwind differences in ``log y``.

    In ``d_s g = y g' + ...`` information travels toward ``y = 0``, so the
    stencils lean right.
    """
    return -_backward(g[::-1], ds, order)[::-1]


def _backward(g: np.ndarray, ds: float, order: int) -> np.ndarray:
    # derivative along increasing index with inflow at index 0; the ghosts
    # come from nodes 1 and 2 only, since extrapolating through node 0
    # feeds its own growth back in
    if g[1] > 0 and g[2] > 0:
        r = g[1] / g[2]
        ghost = [g[1] * r**4, g[1] * r * r]
    else:
        ghost = [0.0, 0.0]
    v = np.concatenate([ghost, g, [3.0 * g[-1] - 3.0 * g[-2] + g[-3]]])
    c = v[2:-1]
    if order == 1:
        return (c - v[1:-2]) / ds
    if order != 3:
        raise ValueError("upwind order must be 1 or 3")
    # upwind-biased third order: (2 g_{i+1} + 3 g_i - 6 g_{i-1} + g_{i-2}) / 6
    return (2.0 * v[3:] + 3.0 * c - 6.0 * v[1:-2] + v[:-3]) / (6.0 * ds)


def relax_to_profile(k: KernelSpec, g0: GridFunction, opts: RelaxOptions | None = None,
                     mass: float = 1.0):
    """Evolve ``(1 - lam) d_s g = 2g + y g' + (1 - lam) C(g, g)`` to a steady state.

    This is the coagulation equation in self-similar variables with
    ``s = log(t0 + t)``, so its stationary points are the profiles.

    The mass is reset to ``mass`` after every step. Returns a
    ``ProfileSolution``; a zero start is returned unchanged and flagged
    as not converged.
    """
    from . import profiles

    opts = opts or RelaxOptions()
    grid = g0.grid
    if grid.kind != GEOMETRIC:
        raise GridKindError("relaxation runs on geometric grids")
    if np.any(g0.values < 0) or not np.all(np.isfinite(g0.values)):
        raise InvalidRange("initial profile must be finite and nonnegative")
    lam = k.lam
    y = np.asarray(grid.nodes)
    wy = grid.weights * y
    ds = grid.step
    g = g0
    if not np.any(g.values > 0):
        return profiles._package(k, g, 0.0, 0, False, (), profiles.SolverOptions())
    g = g * (mass / profiles._mass_of(g))
    def rhs(v):
        c = coagop.apply_pointwise(k, GridFunction(grid, v), GridFunction(grid, v)).values
        return (2.0 * v + _upwind(v, ds, opts.upwind_order)) / (1.0 - lam) + c

    def renorm(v):
        gf = GridFunction(grid, np.maximum(v, 0.0))
        return gf * (mass / profiles._mass_of(gf))

    history = []
    for it in range(1, opts.max_steps + 1):
        # Heun's method; the step is bounded by advection and by the loss rate
        rate = (2.0 + 1.0 / ds) / (1.0 - lam) + np.max(loss_rate(g, k))
        dt = opts.cfl / rate
        r0 = rhs(g.values)
        mid = np.maximum(g.values + dt * r0, 0.0)
        gn = renorm(g.values + 0.5 * dt * (r0 + rhs(mid)))
        change = float(np.cumsum(wy * np.abs(gn.values - g.values))[-1]) / (dt * mass)
        history.append(change)
        g = gn
        if change < opts.tol:
            return profiles._package(k, g, mass, it, True, history, profiles.SolverOptions())
    raise NoConvergence(f"relaxation did not settle in {opts.max_steps} steps",
                        partial=profiles._package(k, g, mass, opts.max_steps, False, history,
                                                  profiles.SolverOptions()))
