"""Riemann-Liouville operators for sampled left-supported functions.

Functions live on a uniform grid ``h, 2h, ..., n h``. Between nodes they
are piecewise linear; on ``[0, h]`` the line through the first two nodes
is used, and the function is zero left of 0. The left integral

    D^{-k} f(y) = 1/Gamma(k) int_0^y f(z) (y - z)^{k-1} dz

is then exact for that interpolant: the kernel moments over each cell are
closed-form, so the integrable singularity at ``z = y`` costs nothing.
Derivatives ``D^k = d^n/dy^n D^{-s}`` (``k = n - s``) differentiate the
fractional integral by second-order finite differences. Right operators
are the reflections of the left ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from .errors import GridKindError, SingularIntegrand
from .grid import UNIFORM, GridFunction


@dataclass(frozen=True)
class FracOrder:
    """An order ``k``; for ``k >= 0`` it splits as ``k = n - s`` with ``0 <= s < 1``."""

    k: float

    @property
    def n(self) -> int:
        if self.k < 0:
            return 0
        return int(math.ceil(self.k))

    @property
    def s(self) -> float:
        if self.k < 0:
            return -self.k
        return self.n - self.k


def _require_uniform(f: GridFunction):
    if f.grid.kind != UNIFORM:
        raise GridKindError("fractional operators need a uniform grid")


@lru_cache(maxsize=64)
def _weights(k: float, n: int, h: float):
    """Product-integration weights for ``int_0^{mh} F(u) u^{k-1} du``.

    On cell ``[(m-1)h, mh]`` a linear ``F`` contributes ``Q_m F((m-1)h) + P_m F(mh)``.
    """
    m = np.arange(1, n + 2, dtype=float)
    A = h**k * (m**k - (m - 1.0) ** k) / k
    B = h ** (k + 1.0) * (m ** (k + 1.0) - (m - 1.0) ** (k + 1.0)) / (k + 1.0)
    P = (B - (m - 1.0) * h * A) / h
    Q = (m * h * A - B) / h
    return P, Q


def _with_origin(v: np.ndarray) -> np.ndarray:
    # value at y = 0 from the line through the first two nodes
    f0 = 2.0 * v[0] - v[1] if v.size > 1 else v[0]
    return np.concatenate([[f0], v])


def _left_integral_values(v: np.ndarray, k: float, h: float) -> np.ndarray:
    n = v.size
    F = _with_origin(v)
    P, Q = _weights(k, n, h)
    # D^{-k} f(ih) = sum_l c_l F_{i-l} - Q_{i+1} F_0, c_0 = Q_1, c_l = P_l + Q_{l+1}
    c = np.empty(n + 1)
    c[0] = Q[0]
    c[1:] = P[:n] + Q[1 : n + 1]
    conv = np.convolve(F, c)[: n + 1]
    out = conv[1:] - Q[1 : n + 1] * F[0]
    return out / special.gamma(k)


def left_integral(f: GridFunction, k: float) -> GridFunction:
    """``D^{-k} f`` for ``k > 0``."""
    _require_uniform(f)
    if not k > 0:
        raise ValueError("the integral order must be positive")
    return GridFunction(f.grid, _left_integral_values(f.values, float(k), f.grid.step))


def _differentiate(v: np.ndarray, h: float, times: int) -> np.ndarray:
    for _ in range(times):
        v = np.gradient(v, h, edge_order=2)
    return v


def left_derivative(f: GridFunction, k: float) -> GridFunction:
    """``D^k f = d^n/dy^n D^{-s} f`` for ``k >= 0`` (``k = 0`` is the identity)."""
    _require_uniform(f)
    if k < 0:
        raise ValueError("the derivative order must be nonnegative")
    o = FracOrder(float(k))
    v = f.values if o.s == 0 else _left_integral_values(f.values, o.s, f.grid.step)
    return GridFunction(f.grid, _differentiate(np.array(v), f.grid.step, o.n))


def fractional(f: GridFunction, k: float) -> GridFunction:
    """``D^k f`` for any real ``k``: an integral when ``k < 0``."""
    return left_integral(f, -k) if k < 0 else left_derivative(f, k)


def reflect(f: GridFunction) -> GridFunction:
    """``y -> (n + 1) h - y``, which maps the uniform nodes onto themselves."""
    _require_uniform(f)
    return GridFunction(f.grid, f.values[::-1])


def right_integral(f: GridFunction, k: float) -> GridFunction:
    """``D_{-k} f(y) = 1/Gamma(k) int_y^inf f(z) (z - y)^{k-1} dz``."""
    return reflect(left_integral(reflect(f), k))


def right_derivative(f: GridFunction, k: float) -> GridFunction:
    """``D_k f = (-1)^n d^n/dy^n D_{-s} f``."""
    return reflect(left_derivative(reflect(f), k))


def right_fractional(f: GridFunction, k: float) -> GridFunction:
    return right_integral(f, -k) if k < 0 else right_derivative(f, k)


def right_integral_at_zero(f: GridFunction, k: float) -> float:
    """``D_{-k} f(0)``, using the same piecewise-linear model as the operators."""
    _require_uniform(f)
    h = f.grid.step
    n = f.grid.n
    # nodes 0, h, ..., nh and the reflected virtual node (n+1)h
    F = np.concatenate([_with_origin(f.values), [2.0 * f.values[-1] - f.values[-2]]])
    P, Q = _weights(float(k), n, h)
    val = np.cumsum(Q[: n + 1] * F[:-1] + P[: n + 1] * F[1:])[-1]
    return float(val) / special.gamma(k)


# ---------------------------------------------------------------------------
# pairings and convolutions


def _power_tail_integral(x0: float, x1: float, v0: float, v1: float) -> float:
    """``int_0^{x0}`` of the power law through ``(x0, v0)`` and ``(x1, v1)``."""
    if v0 == 0.0:
        return 0.0
    if v1 == 0.0 or (v0 > 0) != (v1 > 0):
        return 0.0
    p = math.log(v1 / v0) / math.log(x1 / x0)
    if p <= -1.0:
        raise SingularIntegrand(f"integrand ~ z^{p:.3g} near 0: the pairing diverges")
    return v0 * x0 / (p + 1.0)


def finite_part_pairing(f: GridFunction, phi, phi0: float | None = None) -> float:
    """``<{f}, phi> = int_0^inf f(z) (phi(z) - phi(0)) dz``.

    ``phi`` is a callable or a grid function on the grid of ``f``; ``phi0``
    is ``phi(0)`` and must be given when ``phi`` is a grid function.
    The piece ``(0, y_0)`` is added from a power-law fit of the integrand.
    """
    y = np.asarray(f.grid.nodes)
    if isinstance(phi, GridFunction):
        if phi0 is None:
            raise ValueError("phi(0) must be supplied for a sampled test function")
        pv = phi.values
    else:
        pv = np.asarray(phi(y), dtype=float)
        if phi0 is None:
            phi0 = float(phi(np.array(0.0)))
    integrand = f.values * (pv - phi0)
    if not np.all(np.isfinite(integrand)):
        raise SingularIntegrand("pairing integrand is not finite")
    body = float(np.cumsum(f.grid.weights * integrand)[-1])
    return body + _power_tail_integral(y[0], y[1], integrand[0], integrand[1])


def convolve(u: GridFunction, v: GridFunction) -> GridFunction:
    """``(u * v)(y) = int_0^y u(z) v(y - z) dz`` by the trapezoid rule on ``0, h, ..., nh``."""
    _require_uniform(u)
    if u.grid != v.grid:
        raise ValueError("u and v must share a grid")
    h = u.grid.step
    U, V = _with_origin(u.values), _with_origin(v.values)
    full = np.convolve(U, V)[: U.size]
    # trapezoid: halve the two end products
    out = h * (full - 0.5 * (U[0] * V + V[0] * U))
    return GridFunction(u.grid, out[1:])


def pairing(f: GridFunction, g: GridFunction) -> float:
    """``int f g`` on a shared grid."""
    return float(np.cumsum(f.grid.weights * f.values * g.values)[-1])


# ---------------------------------------------------------------------------
# identity and bound checks


def check_difference_integral(k: float, z: float, X: float | None = None) -> tuple[float, float]:
    """``(numeric, exact)`` for ``int_0^inf (x^{k-1} - (z + x)^{k-1}) dx = z^k / k``.

    The integral is computed by adaptive quadrature on ``[0, X]``
    (``X = 10^6 z`` by default), with an algebraic weight for the ``x^{k-1}``
    singularity, plus the first three terms of the large-``x`` expansion for
    the remainder.
    """
    if not 0 < k < 1 or not z > 0:
        raise ValueError("need 0 < k < 1 and z > 0")
    X = 1e6 * z if X is None else float(X)
    # near 0: x^{k-1} (1 - (x / (z + x))^{1-k}), weight x^{k-1}
    head, _ = integrate.quad(lambda x: 1.0 - (x / (z + x)) ** (1.0 - k), 0.0, z,
                             weight="alg", wvar=(k - 1.0, 0.0))
    edges = z * np.logspace(0.0, math.log10(X / z), int(math.ceil(math.log10(X / z))) + 1)
    body = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(lambda x: x ** (k - 1.0) - (z + x) ** (k - 1.0), a, b, limit=200)
        body += val
    # x^{k-1} - (x+z)^{k-1} = -sum_{j>=1} binom(k-1, j) z^j x^{k-1-j}
    tail = 0.0
    for j in (1, 2, 3):
        tail += -special.binom(k - 1.0, j) * z**j * X ** (k - j) / (j - k)
    return head + body + tail, z**k / k


def weak_product_rhs(phi, dphi, psi, f_grid, k: float, order: int = 32) -> GridFunction:
    """Right side of the weak product rule at the nodes of a uniform grid.

        phi(y) psi(y) - sin(pi k)/pi int_y^inf psi(x) J(x, y) dx,
        J(x, y) = int_0^1 phi'(y + u (x - y)) (1 - u)^k u^{-k} du.

    ``J`` uses Gauss-Jacobi quadrature for the weight ``(1-u)^k u^{-k}``;
    the ``x`` integral uses the trapezoid rule on the grid nodes.
    """
    if f_grid.kind != UNIFORM:
        raise GridKindError("weak_product_rhs needs a uniform grid")
    xg, wg = special.roots_jacobi(order, k, -k)
    u = 0.5 * (xg + 1.0)
    wu = 0.5 * wg
    y = np.asarray(f_grid.nodes)
    h = f_grid.step
    ps = np.asarray(psi(y), dtype=float)
    out = np.asarray(phi(y), dtype=float) * ps
    c = math.sin(math.pi * k) / math.pi
    for i in range(y.size):
        x = y[i:]
        pts = y[i] + u[None, :] * (x - y[i])[:, None]
        J = np.sum(np.asarray(dphi(pts)) * wu, axis=-1)
        vals = ps[i:] * J
        if vals.size > 1:
            integral = h * (np.cumsum(vals)[-1] - 0.5 * (vals[0] + vals[-1]))
        else:
            integral = 0.0
        out[i] -= c * integral
    return GridFunction(f_grid, out)


def weak_product_lhs(phi: GridFunction, psi: GridFunction, k: float) -> GridFunction:
    """``D_k (phi D_{-k} psi)`` by the grid operators."""
    inner = right_integral(psi, k)
    return right_derivative(GridFunction(psi.grid, phi.values * inner.values), k)


def finite_part_integral_pairing(f: GridFunction, phi: GridFunction, k: float) -> float:
    """``<D^{-k} {f}, phi> = <{f}, D_{-k} phi>`` for ``f`` possibly non-integrable at 0.

    ``phi`` is sampled on the same uniform grid and taken to vanish beyond it.
    """
    dphi = right_integral(phi, k)
    d0 = right_integral_at_zero(phi, k)
    return finite_part_pairing(f, dphi, phi0=d0)


def integral_bound_ratio(f: GridFunction, k: float, phis, weighted_norm: float | None = None) -> float:
    """Largest ``|<D^{-k}{f}, phi>| / (||phi||_inf 2/Gamma(k+1) ||y^k f||_1)`` over ``phis``.

    The bound states this never exceeds 1. ``weighted_norm`` overrides the
    quadrature value of ``||y^k f||_1`` (e.g. with a closed form).
    """
    y = np.asarray(f.grid.nodes)
    if weighted_norm is None:
        wf = np.abs(f.values) * y**k
        weighted_norm = float(np.cumsum(f.grid.weights * wf)[-1])
        weighted_norm += _power_tail_integral(y[0], y[1], wf[0], wf[1])
    bound = 2.0 / special.gamma(k + 1.0) * weighted_norm
    worst = 0.0
    for phi in phis:
        sup = float(np.max(np.abs(phi.values)))
        if sup == 0:
            continue
        worst = max(worst, abs(finite_part_integral_pairing(f, phi, k)) / (sup * bound))
    return worst
