"""Numerical checks of the structural properties of computed profiles.

Every check returns a ``Check`` record; ``verify`` bundles the checks that
apply to a solution's kernel class into a ``VerificationReport``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import coagop, profiles
from .errors import InsufficientResolution
from .grid import GridFunction, moment_with_tail
from .kernel import ALPHA_NEG, ALPHA_ZERO, KernelSpec
from .profiles import ProfileSolution, SolverOptions


@dataclass(frozen=True)
class Check:
    name: str
    measured: float
    expected: float | None
    tolerance: float | None
    passed: bool
    anchor: str  # the property being tested, in words
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _clean(asdict(self))


@dataclass(frozen=True)
class VerificationReport:
    checks: tuple
    profile_id: str

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {"profile_id": self.profile_id, "passed": self.passed,
                "checks": [c.to_dict() for c in self.checks]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _clean(x):
    # json has no nan/inf and no numpy scalars
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def profile_id(g: GridFunction) -> str:
    h = hashlib.sha256()
    h.update(json.dumps(g.grid.to_dict(), sort_keys=True).encode())
    h.update(np.ascontiguousarray(g.values, dtype="<f8").tobytes())
    return h.hexdigest()[:16]


def _unpack(sol_or_g):
    if isinstance(sol_or_g, ProfileSolution):
        return sol_or_g.g
    return sol_or_g


# ---------------------------------------------------------------------------
# alpha = 0


def fit_tau(g: GridFunction, window: tuple[float, float] = (2.0, 20.0), min_nodes: int = 16) -> float:
    """Exponent ``tau`` with ``G(y) ~ c y^{1 - tau}`` on ``[w0 y_0, w1 y_0]``.

    Least squares on ``log G`` against ``log y``.
    """
    y = g.grid.nodes
    y0 = g.grid.y_min
    sel = (y >= window[0] * y0 * (1 - 1e-12)) & (y <= window[1] * y0 * (1 + 1e-12))
    if np.count_nonzero(sel) < min_nodes:
        raise InsufficientResolution(
            f"fit window holds {np.count_nonzero(sel)} nodes, need {min_nodes}")
    G, _ = coagop.tail_primitive(g)
    Gv = G.values[sel]
    if np.any(Gv <= 0):
        raise InsufficientResolution("primitive is not positive on the fit window")
    slope = np.polyfit(np.log(y[sel]), np.log(Gv), 1)[0]
    return 1.0 - float(slope)


def check_tau_identity(sol: ProfileSolution, tol: float = 5e-2,
                       window: tuple[float, float] = (2.0, 20.0)) -> Check:
    tau_formula = sol.tau if sol.tau is not None else profiles._tau_of(sol.kernel, sol.g)
    tau_fit = fit_tau(sol.g, window)
    err = abs(tau_fit - tau_formula)
    return Check("tau_identity", tau_fit, tau_formula, tol, bool(err <= tol),
                 "small-y exponent equals 2 - (1 - lambda) M_lambda",
                 {"window": list(window), "difference": err})


def check_tau_bounds(sol: ProfileSolution, tol: float = 5e-2) -> Check:
    """``1 < tau < min(3/2, 1 + lam)`` for ``lam > 0``, with ``tol`` on each side."""
    lam = sol.lam
    tau = sol.tau
    hi = min(1.5, 1.0 + lam)
    applies = lam > 0
    ok = (not applies) or (1.0 - tol < tau < hi + tol)
    return Check("tau_bounds", tau, None, tol, bool(ok), "1 < tau < min(3/2, 1 + lambda)",
                 {"lower": 1.0, "upper": hi, "applies": applies})


def check_monotone_II(sol_or_g, tau: float | None = None, slack: float = 1e-6) -> Check:
    """``y^{tau - 1} G(y)`` must be nonincreasing, up to relative ``slack``."""
    g = _unpack(sol_or_g)
    if tau is None:
        tau = sol_or_g.tau
    anchor = "y^(tau-1) G(y) is nonincreasing"
    if not np.any(g.values != 0):
        return Check("monotone_primitive", 0.0, 0.0, slack, True, anchor, {"vacuous": True})
    v = profiles.scaled_primitive(g, tau)
    rise = np.diff(v) / np.maximum(np.abs(v[:-1]), np.finfo(float).tiny)
    worst = int(np.argmax(rise))
    ok = bool(rise[worst] <= slack)
    details = {"tau": tau}
    if not ok:
        details.update(node=worst + 1, y=float(g.grid.nodes[worst + 1]))
    return Check("monotone_primitive", float(max(rise[worst], 0.0)), 0.0, slack, ok, anchor, details)


# ---------------------------------------------------------------------------
# alpha < 0


def check_asymptotics_III(sol_or_g, lambda_fn: profiles.LambdaFunction | None = None,
                          slack: float = 1e-6, osc_tol: float = 5e-2) -> Check:
    """``K = g e^Lambda``: nonincreasing, positive, nearly flat near the left edge.

    Monotonicity is tested on every node where ``g`` is resolved (nonzero);
    the oscillation on the half-decade above the first such node. If ``g``
    underflows on part of the grid's lowest half-decade the window starts
    higher and the report says so.
    """
    g = _unpack(sol_or_g)
    if lambda_fn is None:
        lambda_fn = sol_or_g.lambda_fn
    K = profiles.K_of(g, lambda_fn=lambda_fn)
    y = g.grid.nodes
    ok_nodes = np.flatnonzero(np.isfinite(K) & (K > 0))
    anchor = "g e^Lambda is nonincreasing with a positive limit at 0"
    if ok_nodes.size < 2:
        return Check("asymptotics_small_y", math.nan, None, osc_tol, False, anchor,
                     {"reason": "no resolved nodes"})
    first = ok_nodes[0]
    Kr = K[ok_nodes]
    rise = np.diff(Kr) / Kr[:-1]
    monotone = bool(np.max(rise) <= slack)
    positive = bool(K[first] > 0)
    top = y[first] * math.sqrt(10.0)
    win = ok_nodes[y[ok_nodes] <= top * (1 + 1e-12)]
    Kw = K[win]
    osc = float((Kw.max() - Kw.min()) / Kw.max())
    shrunk = bool(first > 0)
    details = {
        "K0": float(K[first]),
        "y_first_resolved": float(y[first]),
        "monotone": monotone,
        "max_relative_rise": float(max(np.max(rise), 0.0)),
        "positive": positive,
        "oscillation": osc,
        "window": [float(y[first]), float(y[win[-1]])],
        "underflow_window": shrunk,
    }
    if not monotone:
        details["node"] = int(ok_nodes[int(np.argmax(rise)) + 1])
    return Check("asymptotics_small_y", osc, 0.0, osc_tol,
                 monotone and positive and osc <= osc_tol, anchor, details)


def K_without_beta_term(sol: ProfileSolution) -> np.ndarray:
    """``g e^Lambda`` with the ``y^beta`` pieces of ``Lambda`` removed."""
    lf = sol.lambda_fn
    kept = tuple((c, e) for c, e in lf.pieces if e < 0)
    return profiles.K_of(sol.g, lambda_fn=profiles.LambdaFunction(lf.lam, kept))


# ---------------------------------------------------------------------------
# uniqueness and smoothness


def l11_distance(a: GridFunction, b: GridFunction) -> float:
    y = a.grid.nodes
    return float(np.sum(a.grid.weights * y * np.abs(a.values - b.values)))


def uniqueness_experiment(k: KernelSpec, mass: float, seeds, opts: SolverOptions | None = None,
                          grid=None, factor: float = 3.0, moment_tol: float = 1e-4) -> Check:
    """Solve from two seeds at the same mass and compare the outputs."""
    opts = opts or SolverOptions()
    s1, s2 = (profiles.solve(k, mass, opts, grid, g0) for g0 in seeds)
    dist = l11_distance(s1.g, s2.g) / mass
    bound = factor * opts.tol
    ok = dist <= bound
    details = {"iterations": [s1.iterations, s2.iterations]}

    def rel(a, b):
        return abs(a - b) / max(abs(a), abs(b), np.finfo(float).tiny)

    if k.kernel_class == ALPHA_ZERO:
        m = [s.moments["lambda"][0] for s in (s1, s2)]
        details["M_lambda"] = m
        details["M_lambda_relative_difference"] = rel(*m)
        ok = ok and rel(*m) <= moment_tol
    elif k.kernel_class == ALPHA_NEG:
        for name in ("alpha", "beta"):
            m = [s.moments[name][0] for s in (s1, s2)]
            details["M_" + name] = m
            details[f"M_{name}_relative_difference"] = rel(*m)
            ok = ok and rel(*m) <= moment_tol
        if s1.K0 and s2.K0:
            details["K0_ratio"] = s1.K0 / s2.K0
    return Check("uniqueness", dist, 0.0, bound, bool(ok),
                 "profiles of equal mass coincide", details)


def _divided(v: np.ndarray, h: float, order: int) -> np.ndarray:
    return np.diff(v, order) / h**order


def smoothness_sanity(sol_or_g, coarse: GridFunction | None = None, bound: float = 4.0) -> Check:
    """Second and third differences stay bounded when the grid is refined.

    ``coarse`` defaults to every other node of the fine grid. Differences are
    taken in the grid's own coordinate and compared on the trusted interval.
    """
    fine = _unpack(sol_or_g)
    if coarse is None:
        grid, take = _every_other(fine.grid)
        coarse = GridFunction(grid, fine.values[take])
    ratios = {}
    for order in (2, 3):
        vals = []
        for g in (fine, coarse):
            d = _divided(g.values, g.grid.step, order)
            # a difference is attributed to the span of its stencil
            y = g.grid.nodes
            inside = profiles.trusted_mask(fine.grid)
            lo, hi = fine.grid.nodes[inside][[0, -1]] if np.any(inside) else (y[0], y[-1])
            sel = (y[:-order] >= lo) & (y[order:] <= hi)
            vals.append(float(np.max(np.abs(d[sel]))) if np.any(sel) else 0.0)
        if vals[1] == 0.0:
            ratios[order] = 1.0 if vals[0] == 0.0 else math.inf
        else:
            ratios[order] = vals[0] / vals[1]
    worst = max(ratios.values())
    return Check("smoothness", worst, None, bound, bool(worst <= bound),
                 "discrete derivatives stay bounded under refinement",
                 {"ratio_second": ratios[2], "ratio_third": ratios[3]})


def _every_other(grid):
    from .grid import GEOMETRIC, Grid

    if grid.kind == GEOMETRIC:
        n = (grid.n + 1) // 2
        return Grid(grid.kind, grid.y_min, float(grid.nodes[2 * (n - 1)]), n), slice(0, 2 * n - 1, 2)
    n = grid.n // 2
    return Grid(grid.kind, 2.0 * grid.y_min, 2.0 * grid.y_min * n, n), slice(1, 2 * n, 2)


# ---------------------------------------------------------------------------


def check_nonnegative(sol_or_g) -> Check:
    g = _unpack(sol_or_g)
    low = float(np.min(g.values))
    details = {} if low >= 0 else {"node": int(np.argmin(g.values))}
    return Check("nonnegative", low, 0.0, 0.0, bool(low >= 0), "profiles are nonnegative", details)


def verify(sol: ProfileSolution) -> VerificationReport:
    """The checks that apply to the solution's kernel class."""
    checks = [check_nonnegative(sol)]
    if sol.kernel.kernel_class == ALPHA_ZERO:
        checks.append(check_tau_identity(sol))
        checks.append(check_tau_bounds(sol))
        checks.append(check_monotone_II(sol))
    elif sol.kernel.kernel_class == ALPHA_NEG:
        checks.append(check_asymptotics_III(sol))
    checks.append(smoothness_sanity(sol))
    mass, _ = moment_with_tail(sol.g, 1.0)
    checks.append(Check("mass", mass, sol.mass, 1e-6 * max(sol.mass, 1.0),
                        bool(abs(mass - sol.mass) <= 1e-6 * max(sol.mass, 1.0)),
                        "first moment equals the prescribed mass"))
    return VerificationReport(tuple(checks), profile_id(sol.g))
