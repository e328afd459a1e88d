"""Self-similar profiles ``2g + y g' + (1 - lam) C(g, g) = 0``.

Two fixed-point solvers are provided, one per kernel class:

* ``alpha = 0``: the equation is integrated once. With ``G(y) = int_y^inf g``
  and ``tau = 2 - (1 - lam) M_lam[g]`` it reads
  ``(tau - 1) G + y G' + h = 0`` with ``h = (1 - lam) G * (y^lam g)``.
* ``alpha < 0``: the loss term is moved to the left, giving
  ``mu(y) g + y g' = h`` with ``mu = y Lambda'`` and
  ``h = -(1 - lam) (y^alpha g) * (y^beta g)``.

In both cases the linear first-order problem is solved by variation of
constants (``ode_solve``), anchored at ``y_max`` where the profile has
decayed, and the new iterate is damped and renormalized to the target mass.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.integrate import cumulative_simpson

from . import coagop
from ._extend import Sampler
from .errors import (
    ClassMismatch,
    InvalidInitialization,
    InvalidRange,
    MonotonicityWarning,
    NoConvergence,
    OverflowGuard,
    TauOutOfRange,
)
from .grid import GEOMETRIC, Grid, GridFunction, make_geometric_grid, moment_with_tail
from .kernel import ALPHA_NEG, ALPHA_ZERO, KernelSpec

# smallest |h| kept in log space; below this h is treated as underflowed
_LOG_FLOOR = -740.0


@dataclass(frozen=True)
class SolverOptions:
    """Iteration controls.

    ``tol`` bounds the estimated L^1_1 distance (relative to the mass) between
    the returned iterate and the fixed point of the discrete map.
    ``residual_tol`` is the acceptance bound on the sup-norm of the profile
    equation residual over the trusted interval; it is limited by the grid
    and is therefore separate from ``tol``.
    """

    tol: float = 1e-8
    max_iter: int = 400
    omega: float = 0.5
    residual_tol: float = 1e-4

    def to_dict(self) -> dict:
        return {"tol": self.tol, "max_iter": self.max_iter, "omega": self.omega,
                "residual_tol": self.residual_tol}


def default_grid() -> Grid:
    return make_geometric_grid(1e-4, 50.0, 512)


@dataclass(frozen=True)
class LambdaFunction:
    """``Lambda(y) = 2 log y - (1 - lam) sum_k c_k l(e_k, y)``.

    ``l(e, y) = y^e / e`` (or ``log y`` for ``e = 0``). A kernel term
    ``w (x^a y^b + x^b y^a)`` contributes ``(w M_b, a)`` and ``(w M_a, b)``.
    """

    lam: float
    pieces: tuple  # ((coefficient, exponent), ...)

    @classmethod
    def from_kernel(cls, k: KernelSpec, moments) -> "LambdaFunction":
        """``moments`` maps an exponent to ``M_exponent[g]``."""
        pieces = []
        for t in k.terms:
            pieces.append((t.weight * moments(t.beta), t.alpha))
            pieces.append((t.weight * moments(t.alpha), t.beta))
        return cls(k.lam, tuple(pieces))

    @classmethod
    def single(cls, M_alpha: float, M_beta: float, alpha: float, beta: float) -> "LambdaFunction":
        return cls(alpha + beta, ((M_beta, alpha), (M_alpha, beta)))

    @property
    def M_alpha(self) -> float:
        return self.pieces[1][0]

    @property
    def M_beta(self) -> float:
        return self.pieces[0][0]

    @property
    def beta_is_zero(self) -> bool:
        return self.pieces[1][1] == 0.0

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        ly = np.log(y)
        out = 2.0 * ly
        for c, e in self.pieces:
            out = out - (1.0 - self.lam) * c * (ly if e == 0.0 else np.exp(e * ly) / e)
        return out

    def mu(self, y):
        """``y Lambda'(y)``."""
        y = np.asarray(y, dtype=float)
        out = np.full(y.shape, 2.0)
        for c, e in self.pieces:
            out = out - (1.0 - self.lam) * c * np.power(y, e)
        return out

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "pieces": [[c, e] for c, e in self.pieces]}

    @classmethod
    def from_dict(cls, d: dict) -> "LambdaFunction":
        return cls(float(d["lambda"]), tuple((float(c), float(e)) for c, e in d["pieces"]))


@dataclass(frozen=True)
class ProfileSolution:
    g: GridFunction
    kernel: KernelSpec
    mass: float
    moments: dict  # name -> (value, tail estimate)
    residual: float
    iterations: int
    converged: bool = True
    tau: float | None = None
    K0: float | None = None
    K0_tilde: float | None = None
    lambda_fn: LambdaFunction | None = None
    history: tuple = field(default=(), compare=False)

    @property
    def grid(self) -> Grid:
        return self.g.grid

    @property
    def lam(self) -> float:
        return self.kernel.lam


# ---------------------------------------------------------------------------
# first-order linear problem


_GAUSS_T, _GAUSS_W = np.polynomial.legendre.leggauss(4)
_GAUSS_T = 0.5 * (_GAUSS_T + 1.0)
_GAUSS_W = 0.5 * _GAUSS_W


@lru_cache(maxsize=16)
def _cell_plan(grid: Grid):
    x = grid.coords
    dx = np.diff(x)
    xq = x[:-1, None] + dx[:, None] * _GAUSS_T
    yq = np.exp(xq) if grid.kind == GEOMETRIC else xq
    # dz / z in the natural coordinate
    jac = np.ones_like(yq) if grid.kind == GEOMETRIC else 1.0 / yq
    return dx, yq, jac * _GAUSS_W, Sampler(grid, yq)


def _anchor_index(grid: Grid, y_a: float) -> int:
    i = int(np.argmin(np.abs(grid.nodes - y_a)))
    if abs(grid.nodes[i] - y_a) > 1e-9 * y_a:
        raise InvalidRange(f"anchor {y_a:g} is not a grid node")
    return i


def ode_solve(mu: GridFunction, h: GridFunction, anchor: tuple[float, float],
              lam=None) -> GridFunction:
    """Solve ``mu(y) g + y g' = h`` with ``g(y_a) = g_a``.

    Variation of constants: ``g = K e^{-Lambda}`` with ``Lambda' = mu / y`` and
    ``K' = e^Lambda h / y``. The solution is propagated cell by cell away
    from the anchor using only differences of ``Lambda``, so ``e^Lambda`` is
    never formed. ``lam`` may supply ``Lambda`` in closed form; otherwise it
    is the cumulative integral of ``mu / y``.
    """
    grid = h.grid
    if mu.grid != grid:
        raise ValueError("mu and h must share a grid")
    y = np.asarray(grid.nodes)
    x = grid.coords
    if lam is not None:
        L = np.asarray(lam(y), dtype=float)
    else:
        dLdx = mu.values if grid.kind == GEOMETRIC else mu.values / y
        L = cumulative_simpson(dLdx, x=x, initial=0.0)
    if not np.all(np.isfinite(L)):
        raise OverflowGuard("Lambda is not finite on the grid")
    ia = _anchor_index(grid, anchor[0])
    dx, yq, wq, smp = _cell_plan(grid)

    hv = h.values
    nz = hv[hv != 0.0]
    if nz.size and (np.all(nz > 0) or np.all(nz < 0)):
        # one sign: interpolate psi = Lambda + log|h|, which is smooth where g is
        sign = 1.0 if nz[0] > 0 else -1.0
        with np.errstate(divide="ignore"):
            lh = np.log(np.abs(hv))
        floored = lh <= _LOG_FLOOR
        psi = L + np.maximum(lh, _LOG_FLOOR)
        psi_q = smp(psi, _NO_TAIL)
        if np.any(floored):
            # the floor puts a kink into psi; cubic stencils across it overshoot
            bad = np.any(floored[smp.idx], axis=-1).reshape(psi_q.shape)
            lin = psi[:-1, None] + np.diff(psi)[:, None] * _GAUSS_T
            psi_q = np.where(bad, lin, psi_q)
        Lq = None
    else:
        sign = 1.0
        psi_q = None
        Lq = np.asarray(lam(yq)) if lam is not None else smp(L, _NO_TAIL)
        hq = smp(hv, _NO_TAIL)

    def cell(i, target):
        # int over cell i of e^{Lambda(z) - target} h(z) dz / z
        if psi_q is not None:
            return sign * dx[i] * np.sum(wq[i] * np.exp(psi_q[i] - target))
        return dx[i] * np.sum(wq[i] * np.exp(Lq[i] - target) * hq[i])

    g = np.empty(grid.n)
    g[ia] = anchor[1]
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(ia, grid.n - 1):
            g[i + 1] = math.exp(L[i] - L[i + 1]) * g[i] + cell(i, L[i + 1])
        for i in range(ia - 1, -1, -1):
            g[i] = math.exp(L[i + 1] - L[i]) * g[i + 1] - cell(i, L[i])
    if not np.all(np.isfinite(g)):
        raise OverflowGuard("solution left the representable range")
    return GridFunction(grid, g)


class _NoTail:
    terms = ()


_NO_TAIL = _NoTail()


# ---------------------------------------------------------------------------
# fixed-point machinery


def _mass_of(g: GridFunction) -> float:
    return moment_with_tail(g, 1.0)[0]


def _initial(grid: Grid, g0, mass: float) -> GridFunction:
    if isinstance(g0, GridFunction):
        if g0.grid != grid:
            raise ValueError("initial iterate lives on a different grid")
        v = np.array(g0.values)
    else:
        v = np.asarray(g0(np.asarray(grid.nodes)), dtype=float)
    if not np.all(np.isfinite(v)) or np.any(v < 0):
        raise InvalidInitialization("initial iterate must be finite and nonnegative")
    g = GridFunction(grid, v)
    m = _mass_of(g) if np.any(v > 0) else 0.0
    if not m > 0:
        raise InvalidInitialization("initial iterate has zero mass")
    return g * (mass / m)


def _mix(old: np.ndarray, new: np.ndarray, omega: float) -> np.ndarray:
    """Damped update ``old^(1-omega) new^omega`` where both are positive.

    To first order this is the arithmetic blend ``(1-omega) old + omega new``,
    but a linear blend keeps a ``(1-omega)^n`` share of the seed, which swamps
    a profile decaying like ``e^{-Lambda}`` near 0. Blending logarithms
    removes that remnant at the same rate in the exponent.
    """
    pos = (old > 0) & (new > 0)
    out = (1.0 - omega) * old + omega * new
    out[pos] = np.exp((1.0 - omega) * np.log(old[pos]) + omega * np.log(new[pos]))
    return out


def _iterate(update, g: GridFunction, mass: float, opts: SolverOptions, package):
    """Damped fixed-point loop with an a posteriori stopping rule.

    With contraction estimate ``rho`` from successive step sizes, the
    distance to the fixed point is bounded by ``d rho / (1 - rho)``; the
    loop stops when that bound (or ``d`` itself once ``rho`` is unknown)
    falls below ``tol``.
    """
    grid = g.grid
    wy = grid.weights * grid.nodes
    history = []
    prev = None
    for it in range(1, opts.max_iter + 1):
        new = np.maximum(update(g), 0.0)
        gn = GridFunction(grid, new)
        m = _mass_of(gn)
        if not (m > 0 and math.isfinite(m)):
            raise NoConvergence("iteration collapsed to zero mass", partial=package(g, it, False, history))
        new = _mix(g.values, new * (mass / m), opts.omega)
        d = float(np.cumsum(wy * np.abs(new - g.values))[-1]) / mass
        g = GridFunction(grid, new)
        history.append(d)
        if prev is not None and prev > 0 and d < prev:
            rho = d / prev
            bound = d * rho / (1.0 - rho)
        else:
            bound = math.inf
        prev = d
        if max(bound, 0.0) < opts.tol or d < 0.1 * opts.tol:
            return package(g, it, True, history)
    raise NoConvergence(f"no convergence in {opts.max_iter} iterations (last step {d:.3g})",
                        partial=package(g, opts.max_iter, False, history))


def _moments(k: KernelSpec, g: GridFunction) -> dict:
    out = {"0": moment_with_tail(g, 0.0), "1": moment_with_tail(g, 1.0),
           "lambda": moment_with_tail(g, k.lam)}
    out["alpha"] = moment_with_tail(g, k.alpha_eff)
    out["beta"] = moment_with_tail(g, k.beta_eff)
    return out


def _m(g: GridFunction, mu: float) -> float:
    return moment_with_tail(g, mu)[0]


def _powered(g: GridFunction, e: float) -> GridFunction:
    return g if e == 0.0 else GridFunction(g.grid, g.values * g.grid.nodes**e)


# ---------------------------------------------------------------------------
# alpha = 0


def _tau_of(k: KernelSpec, g: GridFunction) -> float:
    w = sum(t.weight for t in k.terms)
    return 2.0 - (1.0 - k.lam) * w * _m(g, k.lam)


def _alpha_zero_update(k: KernelSpec):
    lam = k.lam
    w = sum(t.weight for t in k.terms)

    def update(g: GridFunction) -> np.ndarray:
        grid = g.grid
        y = np.asarray(grid.nodes)
        tau = _tau_of(k, g)
        G, Gt = coagop.tail_primitive(g)
        h = (1.0 - lam) * w * coagop.plain_convolution(G, _powered(g, lam), tail_u=Gt).values
        # (tau - 1) G + y G' = -h, anchored at y_max
        Gn = ode_solve(GridFunction(grid, np.full(grid.n, tau - 1.0)), GridFunction(grid, -h),
                       (grid.y_max, G.values[-1]), lam=lambda z: (tau - 1.0) * np.log(z))
        return ((tau - 1.0) * Gn.values + h) / y

    return update


def _check_alpha_zero(k: KernelSpec):
    if k.kernel_class != ALPHA_ZERO or any(t.alpha != 0.0 for t in k.terms):
        raise ClassMismatch("solve_alpha_zero needs every kernel term to have alpha = 0")


def solve_alpha_zero(k: KernelSpec, mass: float = 1.0, opts: SolverOptions | None = None,
                     grid: Grid | None = None, g0=None) -> ProfileSolution:
    """Profile for a kernel with ``alpha = 0`` by iterating the integrated equation.

    The default initial iterate is ``y^{-(1 + lam/2)} e^{-y}`` (``e^{-y}``
    when ``lam = 0``), scaled to ``mass``.
    """
    _check_alpha_zero(k)
    if not mass > 0:
        raise InvalidRange("mass must be positive")
    opts = opts or SolverOptions()
    grid = grid or default_grid()
    lam = k.lam
    if g0 is None:
        g0 = (lambda y: np.exp(-y)) if lam == 0 else (lambda y: y ** (-(1.0 + lam / 2.0)) * np.exp(-y))
    g = _initial(grid, g0, mass)
    return _iterate(_alpha_zero_update(k), g, mass, opts,
                    lambda gg, it, ok, hist: _package(k, gg, mass, it, ok, hist, opts))


# ---------------------------------------------------------------------------
# alpha < 0


def lambda_function(k: KernelSpec, g: GridFunction) -> LambdaFunction:
    return LambdaFunction.from_kernel(k, lambda e: _m(g, e))


def _alpha_neg_update(k: KernelSpec):
    lam = k.lam

    def update(g: GridFunction) -> np.ndarray:
        grid = g.grid
        y = np.asarray(grid.nodes)
        L = lambda_function(k, g)
        h = np.zeros(grid.n)
        for t in k.terms:
            h -= (1.0 - lam) * t.weight * coagop.plain_convolution(_powered(g, t.alpha), _powered(g, t.beta)).values
        out = ode_solve(GridFunction(grid, L.mu(y)), GridFunction(grid, h), (grid.y_max, 0.0), lam=L)
        return out.values

    return update


def solve_alpha_neg(k: KernelSpec, mass: float = 1.0, opts: SolverOptions | None = None,
                    grid: Grid | None = None, g0=None) -> ProfileSolution:
    """Profile for a kernel with ``alpha < 0``.

    Each step solves ``mu g + y g' = h`` with ``mu``, ``Lambda`` and ``h``
    frozen at the current iterate. The free constant in ``K = g e^Lambda`` is
    fixed by requiring ``g(y_max) = 0``; the mass is then restored by scaling.
    """
    if k.kernel_class != ALPHA_NEG:
        raise ClassMismatch("solve_alpha_neg needs a kernel with alpha < 0")
    if not mass > 0:
        raise InvalidRange("mass must be positive")
    opts = opts or SolverOptions()
    grid = grid or default_grid()
    g = _initial(grid, g0 if g0 is not None else (lambda y: np.exp(-y)), mass)
    return _iterate(_alpha_neg_update(k), g, mass, opts,
                    lambda gg, it, ok, hist: _package(k, gg, mass, it, ok, hist, opts))


def solve(k: KernelSpec, mass: float = 1.0, opts: SolverOptions | None = None,
          grid: Grid | None = None, g0=None) -> ProfileSolution:
    """Dispatch on the kernel class."""
    if k.kernel_class == ALPHA_NEG:
        return solve_alpha_neg(k, mass, opts, grid, g0)
    if k.kernel_class == ALPHA_ZERO:
        return solve_alpha_zero(k, mass, opts, grid, g0)
    raise ClassMismatch("profiles for alpha > 0 are not computed by these rewrites")


# ---------------------------------------------------------------------------
# derived quantities


def K_of(sol_or_g, k: KernelSpec | None = None, lambda_fn: LambdaFunction | None = None) -> np.ndarray:
    """``g e^Lambda`` at the nodes (``nan`` where ``g`` underflowed)."""
    if isinstance(sol_or_g, ProfileSolution):
        g, lambda_fn = sol_or_g.g, sol_or_g.lambda_fn
    else:
        g = sol_or_g
        lambda_fn = lambda_fn or lambda_function(k, g)
    y = np.asarray(g.grid.nodes)
    with np.errstate(divide="ignore"):
        lg = np.where(g.values > 0, np.log(np.where(g.values > 0, g.values, 1.0)), np.nan)
    return np.exp(lg + lambda_fn(y))


def scaled_primitive(g: GridFunction, tau: float) -> np.ndarray:
    """``y^{tau - 1} G(y)`` at the nodes."""
    G, _ = coagop.tail_primitive(g)
    y = np.asarray(g.grid.nodes)
    return y ** (tau - 1.0) * G.values


def _first_resolved(K: np.ndarray) -> float | None:
    ok = np.isfinite(K) & (K > 0)
    return float(K[np.argmax(ok)]) if np.any(ok) else None


def _package(k, g, mass, iterations, converged, history, opts) -> ProfileSolution:
    moments = _moments(k, g)
    tau = K0 = K0t = lf = None
    if k.kernel_class == ALPHA_ZERO:
        tau = _tau_of(k, g)
        K0t = float(scaled_primitive(g, tau)[0])
    elif k.kernel_class == ALPHA_NEG:
        lf = lambda_function(k, g)
        K0 = _first_resolved(K_of(g, k, lf))
    sol = ProfileSolution(g=g, kernel=k, mass=mass, moments=moments, residual=math.nan,
                          iterations=iterations, converged=converged, tau=tau, K0=K0,
                          K0_tilde=K0t, lambda_fn=lf, history=tuple(history))
    sol = replace(sol, residual=residual_norm(sol))
    if converged:
        _warn_checks(sol, opts)
    return sol


def _warn_checks(sol: ProfileSolution, opts: SolverOptions):
    k = sol.kernel
    if sol.tau is not None and k.lam > 0:
        hi = min(1.5, 1.0 + k.lam)
        if not 1.0 < sol.tau < hi:
            warnings.warn(f"tau = {sol.tau:.6g} outside (1, {hi:.6g})", TauOutOfRange, stacklevel=3)
    if sol.tau is not None:
        v = scaled_primitive(sol.g, sol.tau)
        if np.any(np.diff(v) > 1e-6 * np.abs(v[:-1])):
            warnings.warn("y^(tau-1) G is not nonincreasing", MonotonicityWarning, stacklevel=3)
    if sol.lambda_fn is not None:
        K = K_of(sol)
        ok = np.isfinite(K)
        Kv = K[ok]
        if np.any(np.diff(Kv) > 1e-6 * np.abs(Kv[:-1])):
            warnings.warn("g e^Lambda is not nonincreasing", MonotonicityWarning, stacklevel=3)


# ---------------------------------------------------------------------------
# rescaling and residual


def rescale_profile(sol: ProfileSolution, mu: float, target: Grid | None = None) -> ProfileSolution:
    """The member ``mu^{1+lam} g(mu y)`` of the scaling family.

    The values are carried on the grid scaled by ``1/mu`` (so every moment
    transforms exactly) and resampled onto ``target`` if one is given.
    """
    from .grid import resample

    if not mu > 0:
        raise InvalidRange("mu must be positive")
    if mu == 1.0 and target is None:
        return sol
    k = sol.kernel
    grid = sol.grid.scaled(1.0 / mu)
    g = GridFunction(grid, mu ** (1.0 + k.lam) * sol.g.values)
    if target is not None:
        g = resample(g, target)
    return _package(k, g, sol.mass * mu ** (k.lam - 1.0), sol.iterations, sol.converged,
                    sol.history, SolverOptions())


def trusted_mask(grid: Grid) -> np.ndarray:
    y = grid.nodes
    return (y >= 10.0 * grid.y_min) & (y <= grid.y_max / 10.0)


def central_derivative(v: np.ndarray, dx: float) -> np.ndarray:
    """Fourth-order central differences; second order at the two outer nodes."""
    d = np.gradient(v, dx, edge_order=2)
    if v.size >= 5:
        d[2:-2] = (v[:-4] - 8.0 * v[1:-3] + 8.0 * v[3:-1] - v[4:]) / (12.0 * dx)
    return d


def residual(sol_or_g, k: KernelSpec | None = None) -> GridFunction:
    """``2g + y g' + (1 - lam) C(g, g)`` at every node (central differences for ``g'``)."""
    if isinstance(sol_or_g, ProfileSolution):
        g, k = sol_or_g.g, sol_or_g.kernel
    else:
        g = sol_or_g
    grid = g.grid
    ydg = central_derivative(g.values, grid.step)
    if grid.kind != GEOMETRIC:
        ydg = grid.nodes * ydg
    c = coagop.apply_pointwise(k, g, g).values
    return GridFunction(grid, 2.0 * g.values + ydg + (1.0 - k.lam) * c)


def residual_norm(sol_or_g, k: KernelSpec | None = None) -> float:
    """Sup-norm of the residual over ``[10 y_0, y_max / 10]``."""
    r = residual(sol_or_g, k)
    mask = trusted_mask(r.grid)
    return float(np.max(np.abs(r.values[mask]))) if np.any(mask) else 0.0
