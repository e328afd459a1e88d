import csv
import json
import shutil
import subprocess
import sys
import warnings

import numpy as np
import pytest

from smolprof import cli, profiles
from smolprof.cli import ExperimentConfig, main
from smolprof.grid import GridFunction, make_geometric_grid
from smolprof.kernel import KernelSpec

from conftest import half_indicator


def run(tmp_path, *argv):
    return main([str(a) for a in argv])


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(x) for x in r] for r in rows[1:]])


@pytest.fixture(scope="module")
def const_profile(tmp_path_factory):
    d = tmp_path_factory.mktemp("solve")
    out = d / "prof.json"
    code = main(["solve", "--alpha", "0", "--beta", "0", "--mass", "1", "--n", "512",
                 "--ymin", "1e-4", "--ymax", "50", "-o", str(out)])
    return code, out


def test_solve_constant_kernel(const_profile):
    code, out = const_profile
    assert code == 0
    d = json.loads(out.read_text())
    assert d["spec_version"] == 1
    assert d["converged"] is True
    assert d["tau"] == pytest.approx(1.0, abs=5e-3)
    assert d["grid"] == {"kind": "geometric", "ymin": 1e-4, "ymax": 50.0, "n": 512}
    assert d["kernel"]["terms"] == [{"alpha": 0.0, "beta": 0.0, "weight": 1.0}]
    for key in ("1", "lambda", "alpha", "beta"):
        assert key in d["moments"]


def test_solve_writes_csv_with_full_precision(const_profile):
    _, out = const_profile
    header, data = read_csv(out.with_suffix(".csv"))
    assert header == ["y", "g"]
    values = json.loads(out.read_text())["values"]
    assert np.array_equal(data[:, 1], np.array(values))


def test_solve_invalid_kernel(tmp_path, capsys):
    assert run(tmp_path, "solve", "--alpha", "0.3", "--beta", "0.9", "-o", tmp_path / "x.json") == 1
    err = capsys.readouterr().err
    assert "alpha" in err or "beta" in err or "lambda" in err
    assert not (tmp_path / "x.json").exists()


def test_solve_negative_alpha(tmp_path):
    out = tmp_path / "neg.json"
    code = run(tmp_path, "solve", "--alpha", "-0.5", "--beta", "0.5", "--n", "256", "--ymin", "1e-3",
               "-o", out)
    assert code == 0
    d = json.loads(out.read_text())
    assert d["K0"] > 0
    assert d["lambda_fn"]["pieces"]


def test_solve_no_convergence_writes_partial(tmp_path):
    out = tmp_path / "p.json"
    assert run(tmp_path, "solve", "--n", "128", "--ymin", "1e-3", "--max-iter", "3", "-o", out) == 2
    assert json.loads(out.read_text())["converged"] is False


@pytest.mark.filterwarnings("ignore::smolprof.errors.MonotonicityWarning")  # coarse 128-node grid
def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# small run\nn = 128\nymin = 1e-3\nmax_iter = 3\n")
    out = tmp_path / "c.json"
    assert run(tmp_path, "solve", "--config", cfg, "-o", out) == 2
    assert json.loads(out.read_text())["grid"]["n"] == 128
    assert run(tmp_path, "solve", "--config", cfg, "--max-iter", "400", "-o", out) == 0


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("nodes = 12\n")
    assert run(tmp_path, "solve", "--config", cfg, "-o", tmp_path / "o.json") == 1
    assert "nodes" in capsys.readouterr().err


def test_config_round_trip():
    c = ExperimentConfig("solve", {"alpha": -0.5, "beta": 0.1 + 0.2, "n": 512, "method": "relax",
                                   "auto_dt": True})
    back = ExperimentConfig.from_text(c.to_text())
    assert back == c


@pytest.mark.filterwarnings("ignore::smolprof.errors.MonotonicityWarning")  # coarse 128-node grid
def test_solve_is_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for out in (a, b):
        assert run(tmp_path, "solve", "--n", "128", "--ymin", "1e-3", "-o", out) == 0
    assert a.read_bytes() == b.read_bytes()


def test_profile_json_round_trip(const_profile):
    _, out = const_profile
    d = json.loads(out.read_text())
    sol = cli.profile_from_dict(d)
    again = cli.profile_to_dict(sol, {"solver": d["solver"]})
    assert again == d


def test_verify_passes(const_profile, tmp_path):
    _, out = const_profile
    rep = tmp_path / "rep.json"
    assert run(tmp_path, "verify", out, "-o", rep) == 0
    d = json.loads(rep.read_text())
    assert d["passed"] is True


def test_verify_rejects_corrupted_profile(const_profile, tmp_path):
    _, out = const_profile
    d = json.loads(out.read_text())
    y = np.geomspace(d["grid"]["ymin"], d["grid"]["ymax"], d["grid"]["n"])
    v = np.array(d["values"])
    v[(y > 1.0) & (y < 1.5)] *= -0.5  # a dip below zero makes G rise
    d["values"] = v.tolist()
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(d))
    rep = tmp_path / "rep.json"
    assert run(tmp_path, "verify", bad, "-o", rep) == 3
    failed = {c["name"] for c in json.loads(rep.read_text())["checks"] if not c["passed"]}
    assert "monotone_primitive" in failed


def test_verify_missing_file(tmp_path):
    assert run(tmp_path, "verify", tmp_path / "nope.json") == 1


def test_verify_malformed_file(tmp_path):
    p = tmp_path / "m.json"
    p.write_text("{not json")
    assert run(tmp_path, "verify", p) == 1


def test_evolve_constant_kernel(tmp_path):
    traj = tmp_path / "traj.csv"
    final = tmp_path / "final.json"
    assert run(tmp_path, "evolve", "--every", "50", "--csv", traj, "-o", final) == 0
    header, data = read_csv(traj)
    assert header == ["t", "M0", "M1", "dist_l1", "dist_l11"]
    assert data[-1, 0] == pytest.approx(99.0)
    assert data[-1, 4] <= 5e-2
    assert np.all(np.diff(data[:, 1]) < 0)
    m1 = data[:, 2]
    assert np.max(np.abs(m1 - m1[0])) / m1[0] <= 1e-8
    d = json.loads(final.read_text())
    assert d["t"] == pytest.approx(99.0)


def test_evolve_distance_falls_from_other_seed(tmp_path):
    # starting from e^-y the exact rescaled state is e^-y at all times, so
    # the distance is pure discretization error; a different seed of the
    # same mass shows the approach
    grid = make_geometric_grid(1e-4, 50.0, 512)
    seed = tmp_path / "seed.json"
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sol = profiles._package(KernelSpec.single(0.0, 0.0), GridFunction(grid, half_indicator(grid.nodes)),
                                1.0, 0, False, (), profiles.SolverOptions())
    cli.write_json(seed, cli.profile_to_dict(sol))
    traj = tmp_path / "traj.csv"
    assert run(tmp_path, "evolve", "--init", seed, "--every", "10", "--csv", traj) == 0
    _, data = read_csv(traj)
    dist = data[:, 4]
    assert dist[0] > 0.5
    above = dist[: int(np.argmax(dist <= 5e-2)) + 1]
    assert np.all(np.diff(above) < 0)
    assert dist[-1] <= 5e-2


def test_evolve_rejects_huge_step(tmp_path):
    assert run(tmp_path, "evolve", "--dt", "1e9", "--csv", tmp_path / "t.csv") == 2


def test_frac_indicator_half_integral(tmp_path):
    src = tmp_path / "ind.csv"
    y = np.arange(1, 201) * 0.02
    cli.write_csv(src, ["y", "f"], zip(y, np.ones_like(y)))
    out = tmp_path / "out.csv"
    assert run(tmp_path, "frac", src, "--k", "0.5", "--side", "left", "--op", "integral", "-o", out) == 0
    _, data = read_csv(out)
    assert np.max(np.abs(data[:, 1] - 2.0 * np.sqrt(y / np.pi))) < 1e-12


def test_frac_order_zero_copies(tmp_path):
    src = tmp_path / "f.csv"
    y = np.arange(1, 51) * 0.1
    f = np.sin(y) * np.exp(-y)
    cli.write_csv(src, ["y", "f"], zip(y, f))
    out = tmp_path / "o.csv"
    assert run(tmp_path, "frac", src, "--k", "0", "-o", out) == 0
    _, data = read_csv(out)
    assert np.array_equal(data[:, 1], f)


def test_frac_rejects_geometric_input(tmp_path):
    src = tmp_path / "g.csv"
    y = np.geomspace(1e-3, 10.0, 40)
    cli.write_csv(src, ["y", "f"], zip(y, np.exp(-y)))
    assert run(tmp_path, "frac", src, "--k", "0.5", "-o", tmp_path / "o.csv") == 1


def test_no_command_is_usage_error():
    assert main([]) == 1


@pytest.mark.skipif(shutil.which("smolprof") is None, reason="console script not installed")
def test_console_script(tmp_path):
    r = subprocess.run(["smolprof", "solve", "--alpha", "0.3", "--beta", "0.9", "-o", str(tmp_path / "x.json")],
                       capture_output=True, text=True)
    assert r.returncode == 1


def test_module_entry(tmp_path):
    r = subprocess.run([sys.executable, "-m", "smolprof.cli", "frac", str(tmp_path / "none.csv")],
                       capture_output=True, text=True)
    assert r.returncode == 1
