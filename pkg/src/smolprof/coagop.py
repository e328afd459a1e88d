"""The coagulation operator ``C(f, g)`` in three discretizations.

``apply_pointwise`` integrates the gain and loss terms directly on the
grid. ``apply_convolution`` instead assembles the operator as
``1/2 ({y^a f} * {y^b g} + {y^b f} * {y^a g})`` summed over kernel terms,
where ``{u}`` pairs a test function ``phi`` with ``u`` through
``phi(z) - phi(0)``. The finite-part product is evaluated through the
regularized split

    ({u} * {v})(y) = int_0^{y/2} u(z) [v(y-z) - v(y)] dz - v(y) int_{y/2}^inf u
                   + (same with u and v exchanged),

which stays finite when ``u`` and ``v`` are non-integrable at 0 and so
is the route to use for singular profiles. ``apply_weak`` is the
double-sum pairing against a test function, and ``primitive_of_C`` the
closed primitive for kernels with ``alpha = 0``.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from ._extend import Extension, PowerTail, Sampler, log_simpson, power_tail_of, subgrid_size
from .errors import ClassMismatch, NonFiniteValue, SingularIntegrand
from .grid import Grid, GridFunction, moment
from .kernel import ALPHA_ZERO, KernelSpec, evaluate

# extra decades (in log z) integrated below y_0 by the split convolution
_BELOW = 12.0


def _check_same_grid(f: GridFunction, g: GridFunction) -> Grid:
    if f.grid != g.grid:
        raise ValueError("f and g must share a grid")
    return f.grid


def _powered(f: GridFunction, e: float) -> GridFunction:
    if e == 0.0:
        return f
    return GridFunction(f.grid, f.values * f.grid.nodes**e)


def apply_pointwise(k: KernelSpec, f: GridFunction, g: GridFunction, left: str = "auto") -> GridFunction:
    """Gain minus loss, integrated directly.

    The gain at ``y`` integrates ``z`` over ``[y_0, y - y_0]`` (folded onto
    ``[y_0, y/2]`` by symmetry) on a logarithmic sub-grid with ``f`` and
    ``g`` interpolated off-node; the
    loss uses the grid quadrature. Contributions from ``z < y_0`` use the
    power-law continuation of the data when every piece is integrable
    (``left="auto"`` or ``"power"``); otherwise both integrals are simply
    truncated at ``y_0``, which drops the same leading term from gain and
    loss so that it cancels. That cancellation is only relied on for
    ``alpha = 0``; with ``alpha < 0`` a non-integrable input is an error.
    """
    grid = _check_same_grid(f, g)
    y = np.asarray(grid.nodes)
    if not (np.all(np.isfinite(f.values)) and np.all(np.isfinite(g.values))):
        raise NonFiniteValue("non-finite input values")
    tf, tg = power_tail_of(f), power_tail_of(g)
    integrable = _tails_integrable(k, tf) and _tails_integrable(k, tg)
    if not integrable and (left == "power" or k.alpha_eff < 0):
        raise SingularIntegrand("integrand is not integrable at 0; use the finite-part route")
    use_tails = integrable and left in ("auto", "power")
    if not use_tails:
        tf = tg = PowerTail()
    ef = Extension(f, tail=tf)
    eg = Extension(g, tail=tg)
    plan = _pointwise_plan(grid)

    def sym(zz, rr, sz, sr):
        fz, gz, fr, gr = ef.sample(sz), eg.sample(sz), ef.sample(sr), eg.sample(sr)
        return evaluate(k, zz, rr) * 0.5 * (fz * gr + gz * fr)

    # the gain integrand is symmetric under z <-> y - z: integrate [y_0, y/2] twice
    z, rest, w, sz, sr = plan["main"]
    gain = 2.0 * np.sum(w * sym(z, rest, sz, sr), axis=-1)

    wq = grid.weights
    amat = evaluate(k, y[None, :], y[:, None])  # amat[i, j] = a(z_j, y_i)
    loss_g = np.cumsum(amat * (wq * g.values), axis=-1)[:, -1]
    loss_f = np.cumsum(amat * (wq * f.values), axis=-1)[:, -1]

    if use_tails:
        # both ends (0, y_0) and (y - y_0, y) of the gain integral, by symmetry
        z, rest, w, sz, sr = plan["edge"]
        gain = gain + 2.0 * np.sum(w * sym(z, rest, sz, sr), axis=-1)
        # innermost piece (0, eps): the factor evaluated at y - z is frozen at y
        eps = z[:, 0]
        for t in k.terms:
            for p, q in ((t.alpha, t.beta), (t.beta, t.alpha)):
                inner = g.values * tf.integral(0.0, eps, p) + f.values * tg.integral(0.0, eps, p)
                gain = gain + t.weight * y**q * inner
        for t in k.terms:
            for p, q in ((t.alpha, t.beta), (t.beta, t.alpha)):
                loss_g += t.weight * y**q * tg.integral(0.0, grid.y_min, p)
                loss_f += t.weight * y**q * tf.integral(0.0, grid.y_min, p)

    loss = 0.5 * (f.values * loss_g + g.values * loss_f)
    out = 0.5 * gain - loss
    if not np.all(np.isfinite(out)):
        raise SingularIntegrand("gain/loss integrals did not stay finite")
    return GridFunction(grid, out)


@lru_cache(maxsize=16)
def _pointwise_plan(grid: Grid) -> dict:
    y = np.asarray(grid.nodes)
    m = subgrid_size(grid, math.log(grid.y_max / grid.y_min))
    z, w = log_simpson(np.full(grid.n, grid.y_min), 0.5 * y, m)
    valid = w > 0
    z = np.where(valid, z, 1.0)
    rest = np.where(valid, y[:, None] - z, 1.0)
    plan = {"main": (z, rest, w, Sampler(grid, z), Sampler(grid, rest))}
    edge = np.minimum(grid.y_min, 0.5 * y)
    z, w = log_simpson(edge * math.exp(-_BELOW), edge, subgrid_size(grid, _BELOW))
    rest = y[:, None] - z
    plan["edge"] = (z, rest, w, Sampler(grid, z), Sampler(grid, rest))
    return plan


@lru_cache(maxsize=16)
def _split_plan(grid: Grid) -> dict:
    """Sub-grids on ``(y/2 e^{-span}, y/2)`` shared by the convolution routines."""
    y = np.asarray(grid.nodes)
    half = 0.5 * y
    span = math.log(grid.y_max / grid.y_min) + _BELOW
    z, w = log_simpson(half * math.exp(-span), half, subgrid_size(grid, span))
    rest = y[:, None] - z
    eps = half * math.exp(-span)
    mt = subgrid_size(grid, math.log(grid.y_max / grid.y_min))
    zt, wt = log_simpson(np.maximum(half, grid.y_min), np.full(grid.n, grid.y_max), mt)
    return {
        "z": z, "w": w, "sz": Sampler(grid, z), "sr": Sampler(grid, rest),
        "eps": eps, "s_eps": Sampler(grid, y - eps),
        "wt": wt, "st": Sampler(grid, zt), "half": half,
    }


def _tails_integrable(k: KernelSpec, tail: PowerTail) -> bool:
    lowest = min(t.alpha for t in k.terms)
    return all(p + lowest > -1.0 for _, p in tail.terms)


def finite_part_convolution(u: GridFunction, v: GridFunction,
                            tail_u: PowerTail | None = None,
                            tail_v: PowerTail | None = None) -> GridFunction:
    """``({u} * {v})(y)`` at the grid nodes, for ``y > 0``.

    ``u`` and ``v`` may be non-integrable at 0 as long as ``z u(z)`` and
    ``z v(z)`` are; their continuation below ``y_0`` is the given power
    tail (fitted from the first nodes by default).
    """
    grid = _check_same_grid(u, v)
    eu = Extension(u, tail=tail_u)
    ev = Extension(v, tail=tail_v)
    _check_tail(eu.tail)
    _check_tail(ev.tail)
    plan = _split_plan(grid)
    w = plan["w"]
    uz, vz = eu.sample(plan["sz"]), ev.sample(plan["sz"])
    ur, vr = eu.sample(plan["sr"]), ev.sample(plan["sr"])
    part = np.sum(w * (uz * (vr - v.values[:, None]) + vz * (ur - u.values[:, None])), axis=-1)
    tails = v.values * _upper_integral(eu, plan) + u.values * _upper_integral(ev, plan)
    return GridFunction(grid, part - tails)


def _upper_integral(e: Extension, plan: dict) -> np.ndarray:
    # int_{y/2}^{y_max} of e, with the power tail covering y/2 < y_0
    out = np.sum(plan["wt"] * e.sample(plan["st"]), axis=-1)
    half = plan["half"]
    below = half < e.grid.y_min
    if np.any(below):
        out[below] += e.tail.integral(half[below], e.grid.y_min)
    return out


def _check_tail(tail: PowerTail):
    for _, p in tail.terms:
        if p <= -2.0:
            raise SingularIntegrand(f"continuation ~ z^{p:.3g} is too singular at 0 for a finite part")


def apply_convolution(k: KernelSpec, f: GridFunction, g: GridFunction) -> GridFunction:
    """``C(f, g)`` on ``(0, y_max]`` through the finite-part representation.

    With ``alpha < 0`` the kernel needs ``y^alpha f`` integrable at 0;
    otherwise ``SingularIntegrand`` is raised.
    """
    grid = _check_same_grid(f, g)
    if k.alpha_eff < 0 and not (_tails_integrable(k, power_tail_of(f))
                                and _tails_integrable(k, power_tail_of(g))):
        raise SingularIntegrand("y^alpha f is not integrable at 0")
    out = np.zeros(grid.n)
    for t in k.terms:
        a = 0.5 * finite_part_convolution(_powered(f, t.alpha), _powered(g, t.beta)).values
        b = 0.5 * finite_part_convolution(_powered(f, t.beta), _powered(g, t.alpha)).values
        out = out + t.weight * (a + b)
    if not np.all(np.isfinite(out)):
        raise SingularIntegrand("finite-part convolution did not stay finite")
    return GridFunction(grid, out)


def apply_weak(k: KernelSpec, f: GridFunction, g: GridFunction, phi, phi0: float | None = None,
               extended: bool = False) -> float:
    """Double-sum approximation of ``<C(f, g), phi>``.

    ``phi`` is a callable on ``[0, 2 y_max]`` (or a grid function on a
    grid reaching ``2 y_max``). The bracket is
    ``phi(x + z) - phi(x) - phi(z)``, the pairing of ``C`` as a function
    on ``(0, inf)``. With ``extended=True`` it gains ``+ phi(0)``: the
    pairing of the extension of ``C`` to the whole line, which carries
    an extra point mass at 0 and so annihilates constants.
    """
    grid = _check_same_grid(f, g)
    y = np.asarray(grid.nodes)
    if isinstance(phi, GridFunction):
        pg = phi
        phi0 = 0.0 if phi0 is None else phi0
        phi = lambda x: np.interp(x, pg.grid.nodes, pg.values, left=phi0)  # noqa: E731
    if phi0 is None:
        phi0 = float(phi(np.array(0.0)))
    py = phi(y)
    bracket = phi(y[:, None] + y[None, :]) - py[:, None] - py[None, :]
    if extended:
        bracket = bracket + phi0
    a = evaluate(k, y[:, None], y[None, :])
    wf = grid.weights * f.values
    wg = grid.weights * g.values
    terms = a * bracket * wf[:, None] * wg[None, :]
    val = 0.5 * float(np.cumsum(np.cumsum(terms, axis=1)[:, -1])[-1])
    if not math.isfinite(val):
        raise NonFiniteValue("weak pairing is not finite")
    return val


def tail_primitive(g: GridFunction, tail: PowerTail | None = None) -> tuple[GridFunction, PowerTail]:
    """``G(y) = int_y^inf g`` at the nodes, and its continuation below ``y_0``.

    The part beyond ``y_max`` is estimated from a power-law fit of the two
    last nodes (exponential tails give a negligible value).
    """
    from ._extend import right_power_fit

    grid = g.grid
    eg = Extension(g, tail=tail)
    G = eg.integral_from_nodes(subgrid_size(grid, math.log(grid.y_max / grid.y_min)))
    fit = right_power_fit(g)
    if fit is not None and fit[1] < -1.0:
        c, p = fit
        G = G + c * grid.y_max ** (p + 1.0) / (-(p + 1.0))
    # continuation: G(z) = G(y_0) + int_z^{y_0} tail
    terms = []
    const = G[0]
    for c, p in eg.tail.terms:
        e = p + 1.0
        if abs(e) < 1e-12:
            raise SingularIntegrand("logarithmic primitive at 0 is not supported")
        terms.append((-c / e, e))
        const += c * grid.y_min**e / e
    terms.append((const, 0.0))
    return GridFunction(grid, G), PowerTail(tuple(terms))


def primitive_of_C(k: KernelSpec, g: GridFunction) -> GridFunction:
    """``int_y^inf C(g, g) = G * (y^lam g) - M_lam[g] G`` for ``alpha = 0`` kernels.

    The sign convention follows the identity: this is the primitive based
    at ``+inf`` of ``C(g, g)``, so ``d/dy`` of the result is ``-C(g, g)``.
    """
    if k.kernel_class != ALPHA_ZERO or any(t.alpha != 0.0 for t in k.terms):
        raise ClassMismatch("primitive_of_C needs every kernel term to have alpha = 0")
    lam = k.lam
    weight = sum(t.weight for t in k.terms)
    G, Gtail = tail_primitive(g)
    conv = plain_convolution(G, _powered(g, lam), tail_u=Gtail)
    m_lam = moment(g, lam) + _left_moment(g, lam)
    return GridFunction(g.grid, weight * (conv.values - m_lam * G.values))


def _left_moment(g: GridFunction, mu: float) -> float:
    from .grid import moment_tails

    return moment_tails(g, mu)[0]


def plain_convolution(u: GridFunction, v: GridFunction,
                      tail_u: PowerTail | None = None,
                      tail_v: PowerTail | None = None) -> GridFunction:
    """``(u * v)(y) = int_0^y u(z) v(y - z) dz`` for integrable ``u, v``.

    Split at ``y/2`` so that each half has its possibly singular factor at
    the left end of a logarithmic sub-grid.
    """
    grid = _check_same_grid(u, v)
    eu = Extension(u, tail=tail_u)
    ev = Extension(v, tail=tail_v)
    plan = _split_plan(grid)
    sz, sr, eps = plan["sz"], plan["sr"], plan["eps"]
    total = np.sum(plan["w"] * (eu.sample(sz) * ev.sample(sr) + ev.sample(sz) * eu.sample(sr)), axis=-1)
    # (0, eps): the smooth factor is frozen at its value near y
    total = (total + ev.sample(plan["s_eps"]) * eu.tail.integral(0.0, eps)
             + eu.sample(plan["s_eps"]) * ev.tail.integral(0.0, eps))
    if not np.all(np.isfinite(total)):
        raise SingularIntegrand("convolution factor is not integrable at 0")
    return GridFunction(grid, total)
