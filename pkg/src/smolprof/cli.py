"""Command-line front end: ``solve``, ``verify``, ``evolve`` and ``frac``.

Options can also come from a plain-text ``key = value`` file given with
``--config``; explicit command-line options win. Exit codes: 0 success,
1 usage or configuration error, 2 numerical failure, 3 failed
verification.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analyzer, dynamics, fracalc, profiles
from .errors import (
    ConstraintViolation,
    GridKindError,
    InvalidInitialization,
    InvalidRange,
    NoConvergence,
    NonFiniteValue,
    OverflowGuard,
    SingularIntegrand,
    SmolprofError,
    StabilityViolation,
)
from .grid import Grid, GridFunction, make_geometric_grid, make_uniform_grid, moment_with_tail
from .kernel import KernelSpec

SCHEMA_VERSION = 1

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_VERIFY = 0, 1, 2, 3

_NUMERICAL = (NoConvergence, StabilityViolation, OverflowGuard, SingularIntegrand, NonFiniteValue)


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    """Parameters of one command, as read from a ``key = value`` file."""

    command: str = ""
    params: dict = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [f"command = {self.command}"] if self.command else []
        for key, value in self.params.items():
            lines.append(f"{key} = {_format_value(value)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        params = {}
        for number, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"config line {number}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            if not key:
                raise ConfigError(f"config line {number}: empty key")
            params[key.replace("-", "_")] = _parse_value(value)
        command = str(params.pop("command", ""))
        return cls(command, params)

    @classmethod
    def read(cls, path) -> "ExperimentConfig":
        try:
            return cls.from_text(Path(path).read_text())
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(s: str):
    low = s.lower()
    if low in ("true", "false"):
        return low == "true"
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    return s


def _merge(args: argparse.Namespace, defaults: dict) -> argparse.Namespace:
    """Fill options left unset on the command line from the config file, then defaults."""
    cfg = ExperimentConfig.read(args.config).params if getattr(args, "config", None) else {}
    known = set(vars(args))
    unknown = set(cfg) - known
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    for key, default in defaults.items():
        if getattr(args, key) is None:
            setattr(args, key, cfg.get(key, default))
    return args


# ---------------------------------------------------------------------------
# persistence


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def profile_to_dict(sol: profiles.ProfileSolution, extra: dict | None = None) -> dict:
    d = {
        "spec_version": SCHEMA_VERSION,
        "kernel": sol.kernel.to_dict(),
        "grid": sol.grid.to_dict(),
        "values": [float(v) for v in sol.g.values],
        "mass": sol.mass,
        "moments": {name: _num(v) for name, (v, _) in sol.moments.items()},
        "moment_tails": {name: _num(t) for name, (_, t) in sol.moments.items()},
        "residual": _num(sol.residual),
        "converged": bool(sol.converged),
        "iterations": int(sol.iterations),
    }
    if sol.tau is not None:
        d["tau"] = sol.tau
        d["K0_tilde"] = _num(sol.K0_tilde)
    if sol.lambda_fn is not None:
        d["K0"] = _num(sol.K0)
        d["lambda_fn"] = sol.lambda_fn.to_dict()
    if extra:
        d.update(extra)
    return d


def profile_from_dict(d: dict) -> profiles.ProfileSolution:
    """Rebuild a solution; derived quantities are recomputed from the values."""
    try:
        if d.get("spec_version") != SCHEMA_VERSION:
            raise ConfigError(f"unsupported spec_version {d.get('spec_version')!r}")
        k = KernelSpec.from_dict(d["kernel"])
        grid = Grid.from_dict(d["grid"])
        values = np.asarray(d["values"], dtype=float)
        if values.shape != (grid.n,):
            raise ConfigError(f"values has {values.size} entries, grid has {grid.n} nodes")
        g = GridFunction(grid, values)
        mass = float(d.get("mass", moment_with_tail(g, 1.0)[0]))
        converged = bool(d.get("converged", True))
        iterations = int(d.get("iterations", 0))
    except (KeyError, TypeError) as e:
        raise ConfigError(f"malformed profile: missing or bad field {e}") from e
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return profiles._package(k, g, mass, iterations, converged, (), profiles.SolverOptions())


def write_json(path, obj) -> None:
    text = json.dumps(obj, indent=1, allow_nan=False)
    if path in (None, "-"):
        sys.stdout.write(text + "\n")
    else:
        Path(path).write_text(text + "\n")


def write_csv(path, header, rows) -> None:
    fh = sys.stdout if path in (None, "-") else open(path, "w", newline="")
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])
    finally:
        if fh is not sys.stdout:
            fh.close()


def read_function_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Two numeric columns with a header line."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    if len(rows) < 3:
        raise ConfigError(f"{path}: need a header and at least two rows")
    try:
        data = np.array([[float(c) for c in r[:2]] for r in rows[1:] if r], dtype=float)
    except (ValueError, IndexError) as e:
        raise ConfigError(f"{path}: non-numeric entry ({e})") from e
    return data[:, 0], data[:, 1]


def _uniform_grid_of(y: np.ndarray) -> Grid:
    n = y.size
    h = y[-1] / n
    if not (h > 0 and np.allclose(y, h * np.arange(1, n + 1), rtol=1e-9, atol=1e-12 * y[-1])):
        raise GridKindError("input must sit on a uniform grid h, 2h, ..., n h")
    return make_uniform_grid(float(y[-1]), n)


# ---------------------------------------------------------------------------
# commands


def _kernel(args) -> KernelSpec:
    if args.terms:
        terms = []
        for chunk in str(args.terms).split(";"):
            parts = [float(p) for p in chunk.replace(":", ",").split(",") if p.strip()]
            if len(parts) not in (2, 3):
                raise ConfigError("terms: each term is alpha,beta[,weight]")
            terms.append(tuple(parts))
        return KernelSpec.from_terms(terms)
    return KernelSpec.single(float(args.alpha), float(args.beta), float(args.weight))


def _grid(args) -> Grid:
    return make_geometric_grid(float(args.ymin), float(args.ymax), int(args.n))


def _seed(source, grid: Grid):
    if source in (None, "", "default"):
        return None
    if source == "exp":
        return GridFunction(grid, np.exp(-grid.nodes))
    sol = profile_from_dict(_load_json(source))
    from .grid import resample

    # a stored profile has decayed by its y_max; beyond it the seed is zero
    inside = grid.nodes <= sol.grid.y_max * (1.0 + 1e-12)
    if np.all(inside):
        return resample(sol.g, grid)
    part = make_geometric_grid(grid.y_min, float(grid.nodes[inside][-1]), int(np.count_nonzero(inside)))
    return GridFunction(grid, np.concatenate([resample(sol.g, part).values, np.zeros(grid.n - part.n)]))


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e


_SOLVE_DEFAULTS = dict(alpha=0.0, beta=0.0, weight=1.0, terms=None, mass=1.0, n=512, ymin=1e-4, ymax=50.0,
                       tol=1e-8, max_iter=400, omega=0.5, residual_tol=1e-4, method="fixed-point",
                       init=None, output="profile.json", csv=None)


def cmd_solve(args) -> int:
    args = _merge(args, _SOLVE_DEFAULTS)
    k = _kernel(args)
    grid = _grid(args)
    opts = profiles.SolverOptions(tol=float(args.tol), max_iter=int(args.max_iter),
                                  omega=float(args.omega), residual_tol=float(args.residual_tol))
    g0 = _seed(args.init, grid)
    code = EXIT_OK
    try:
        if args.method == "relax":
            start = g0 if g0 is not None else GridFunction(grid, np.exp(-grid.nodes))
            sol = dynamics.relax_to_profile(k, start, dynamics.RelaxOptions(tol=opts.tol,
                                            max_steps=opts.max_iter), mass=float(args.mass))
        elif args.method == "fixed-point":
            sol = profiles.solve(k, float(args.mass), opts, grid, g0)
        else:
            raise ConfigError(f"method: unknown value {args.method!r}")
    except NoConvergence as e:
        if e.partial is None:
            raise
        sol = e.partial
        print(f"error: {e}; partial result written", file=sys.stderr)
        code = EXIT_NUMERICAL
    if sol.converged and not sol.residual <= opts.residual_tol:
        print(f"warning: residual {sol.residual:.3g} above {opts.residual_tol:g}", file=sys.stderr)
    write_json(args.output, profile_to_dict(sol, {"solver": opts.to_dict()}))
    csv_path = args.csv
    if csv_path is None and args.output not in (None, "-"):
        csv_path = str(Path(args.output).with_suffix(".csv"))
    if csv_path is not None:
        write_csv(csv_path, ["y", "g"], zip(sol.grid.nodes, sol.g.values))
    return code


def cmd_verify(args) -> int:
    args = _merge(args, dict(output=None))
    sol = profile_from_dict(_load_json(args.profile))
    report = analyzer.verify(sol)
    write_json(args.output, report.to_dict())
    return EXIT_OK if report.passed else EXIT_VERIFY


_EVOLVE_DEFAULTS = dict(alpha=0.0, beta=0.0, weight=1.0, terms=None, n=256, ymin=1e-3, ymax=1e4,
                        t0=1.0, t_end=99.0, dt=None, auto_dt=False, cfl=0.05, every=1,
                        init="exp", reference="exp", output=None, csv=None)


def cmd_evolve(args) -> int:
    args = _merge(args, _EVOLVE_DEFAULTS)
    k = _kernel(args)
    grid = _grid(args)
    lam = k.lam
    if args.dt is None and not args.auto_dt:
        args.auto_dt = True
    f0 = _seed(args.init, grid)
    state = dynamics.EvolutionState.start(f0, t0=float(args.t0))
    ref = None
    if args.reference not in (None, "", "none"):
        if args.reference == "exp":
            ref_grid = make_geometric_grid(max(grid.y_min, 1e-4), min(grid.y_max, 50.0), grid.n)
            ref = GridFunction(ref_grid, np.exp(-ref_grid.nodes))
        else:
            ref = profile_from_dict(_load_json(args.reference)).g
    every = max(1, int(args.every))
    rows = []

    def record(st):
        row = [st.t, dynamics.cell_number(st.f), dynamics.cell_mass(st.f)]
        if ref is not None:
            g = dynamics.rescale_to_profile_frame(st, lam, ref.grid)
            d = np.abs(g.values - ref.values)
            row += [float(np.sum(ref.grid.weights * d)), float(np.sum(ref.grid.weights * ref.grid.nodes * d))]
        rows.append(row)

    count = [0]

    def callback(st):
        count[0] += 1
        if count[0] % every == 0 or st.t >= float(args.t_end) * (1 - 1e-15):
            record(st)

    record(state)
    dt = None if args.auto_dt else float(args.dt)
    code = EXIT_OK
    try:
        state = dynamics.evolve(state, k, float(args.t_end), cfl=float(args.cfl), dt=dt, callback=callback)
    except StabilityViolation as e:
        print(f"error: {e} (use --auto-dt)", file=sys.stderr)
        code = EXIT_NUMERICAL
    header = ["t", "M0", "M1"] + (["dist_l1", "dist_l11"] if ref is not None else [])
    write_csv(args.csv, header, rows)
    if args.output:
        sol = _state_solution(state, k)
        extra = {"t": state.t, "t0": state.t0, "mass0": state.mass0,
                 "outflux": state.outflux, "defect": state.defect}
        write_json(args.output, profile_to_dict(sol, extra))
    return code


def _state_solution(state, k):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return profiles._package(k, state.f, dynamics.cell_mass(state.f), 0, True, (),
                                 profiles.SolverOptions())


_FRAC_DEFAULTS = dict(k=0.5, side="left", op="integral", output=None)


def cmd_frac(args) -> int:
    args = _merge(args, _FRAC_DEFAULTS)
    y, v = read_function_csv(args.input)
    grid = _uniform_grid_of(y)
    f = GridFunction(grid, v)
    k = float(args.k)
    if k < 0:
        raise ConfigError("k must be nonnegative; choose the operation with --op")
    if args.side not in ("left", "right"):
        raise ConfigError(f"side: expected left or right, got {args.side!r}")
    if args.op not in ("integral", "derivative"):
        raise ConfigError(f"op: expected integral or derivative, got {args.op!r}")
    if k == 0:
        out = f
    elif args.op == "integral":
        out = (fracalc.left_integral if args.side == "left" else fracalc.right_integral)(f, k)
    else:
        out = (fracalc.left_derivative if args.side == "left" else fracalc.right_derivative)(f, k)
    write_csv(args.output, ["y", "f"], zip(grid.nodes, out.values))
    return EXIT_OK


# ---------------------------------------------------------------------------


def _kernel_options(p):
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--weight", type=float)
    p.add_argument("--terms", help="several terms as 'alpha,beta,weight;alpha,beta,weight'")


def _grid_options(p):
    p.add_argument("--n", type=int)
    p.add_argument("--ymin", type=float)
    p.add_argument("--ymax", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smolprof", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="compute a self-similar profile")
    p.add_argument("--config")
    _kernel_options(p)
    _grid_options(p)
    p.add_argument("--mass", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--omega", type=float)
    p.add_argument("--residual-tol", dest="residual_tol", type=float)
    p.add_argument("--method", choices=("fixed-point", "relax"))
    p.add_argument("--init", help="'exp' or a profile JSON to start from")
    p.add_argument("-o", "--output")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="run the structural checks on a profile JSON")
    p.add_argument("profile")
    p.add_argument("--config")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("evolve", help="time-dependent run with self-similar rescaling")
    p.add_argument("--config")
    _kernel_options(p)
    _grid_options(p)
    p.add_argument("--t0", type=float)
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--auto-dt", dest="auto_dt", action="store_const", const=True)
    p.add_argument("--cfl", type=float)
    p.add_argument("--every", type=int, help="write every n-th step")
    p.add_argument("--init", help="'exp' or a profile JSON")
    p.add_argument("--reference", help="'exp', 'none' or a profile JSON")
    p.add_argument("-o", "--output", help="final state as profile JSON")
    p.add_argument("--csv", help="trajectory CSV (default stdout)")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("frac", help="fractional integral or derivative of a sampled function")
    p.add_argument("input", help="CSV with header and columns y,f on a uniform grid")
    p.add_argument("--config")
    p.add_argument("--k", type=float)
    p.add_argument("--side", choices=("left", "right"))
    p.add_argument("--op", choices=("integral", "derivative"))
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_frac)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_CONFIG
    try:
        return args.func(args)
    except _NUMERICAL as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ConstraintViolation, InvalidRange, GridKindError, InvalidInitialization,
            SmolprofError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
