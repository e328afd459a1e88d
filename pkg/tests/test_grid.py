import numpy as np
import pytest

from smolprof.errors import ExtrapolationError, InvalidRange, NonFiniteValue
from smolprof.grid import (
    GEOMETRIC,
    Grid,
    GridFunction,
    make_geometric_grid,
    make_uniform_grid,
    moment,
    moment_with_tail,
    resample,
)

from conftest import exp_on


def test_geometric_nodes_ratio_20():
    g = make_geometric_grid(1e-3, 8.0, 4)
    np.testing.assert_allclose(g.nodes, [1e-3, 0.02, 0.4, 8.0], rtol=1e-12)
    assert g.ratio == pytest.approx(20.0, rel=1e-12)


def test_geometric_ratio_2():
    np.testing.assert_allclose(make_geometric_grid(1.0, 4.0, 3).nodes, [1.0, 2.0, 4.0], rtol=1e-14)


@pytest.mark.parametrize("args", [(1.0, 1.0, 8), (2.0, 1.0, 8), (0.0, 1.0, 8), (-1.0, 1.0, 8), (1.0, 2.0, 1)])
def test_geometric_invalid(args):
    with pytest.raises(InvalidRange):
        make_geometric_grid(*args)


def test_constant_ratio():
    g = make_geometric_grid(1e-4, 50.0, 512)
    r = g.nodes[1:] / g.nodes[:-1]
    np.testing.assert_allclose(r, g.ratio, rtol=1e-12)
    assert np.all(np.diff(g.nodes) > 0)


def test_uniform_excludes_zero():
    g = make_uniform_grid(2.0, 8)
    np.testing.assert_allclose(g.nodes, 0.25 * np.arange(1, 9))
    assert g.step == 0.25


def test_weights_positive_and_linear_exact_on_uniform():
    g = make_uniform_grid(3.0, 40)
    assert np.all(g.weights > 0)
    y = g.nodes
    assert np.sum(g.weights * y) == pytest.approx(0.5 * (y[-1] ** 2 - y[0] ** 2), rel=1e-12)


def test_weights_linear_error_second_order_on_geometric():
    errs, widths = [], []
    for n in (32, 64, 128):
        g = make_geometric_grid(1e-3, 10.0, n)
        assert np.all(g.weights > 0)
        y = g.nodes
        errs.append(abs(np.sum(g.weights * y) - 0.5 * (y[-1] ** 2 - y[0] ** 2)))
        widths.append(np.max(np.diff(y)))
    for e, w in zip(errs, widths):
        assert e <= w**2 * 10.0
    assert errs[1] < errs[0] / 3.5 and errs[2] < errs[1] / 3.5


@pytest.mark.parametrize("mu", [0.0, 1.0])
def test_moment_of_exponential(dense, mu):
    assert moment(exp_on(dense), mu) == pytest.approx(1.0, abs=1e-6)


def test_moment_of_zero(dense):
    z = GridFunction(dense, np.zeros(dense.n))
    for mu in (-0.5, 0.0, 0.3, 1.0):
        assert moment(z, mu) == 0.0


def test_moment_nonfinite():
    g = make_geometric_grid(1e-3, 1.0, 16)
    v = np.ones(16)
    v[3] = np.inf
    with pytest.raises(NonFiniteValue):
        moment(GridFunction(g, v), 1.0)


def test_moment_converges_at_least_second_order():
    errs = []
    for n in (32, 64, 128):
        g = make_geometric_grid(1e-8, 80.0, n)
        errs.append(abs(moment(exp_on(g), 1.0) - 1.0))
    assert errs[0] / errs[1] >= 4.0 * 0.9
    assert errs[1] / errs[2] >= 4.0 * 0.9


def test_tail_estimate_reported(geo):
    # y * y^-1.2 is integrable at 0 only; the left piece is y0^0.8 / 0.8
    g = GridFunction(geo, geo.nodes**-1.2)
    value, tail = moment_with_tail(g, 1.0)
    assert tail == pytest.approx(geo.y_min**0.8 / 0.8, rel=1e-9)
    assert value == pytest.approx(geo.y_max**0.8 / 0.8, rel=1e-6)


def test_resample_subgrid(dense):
    target = make_geometric_grid(1e-3, 20.0, 300)
    r = resample(exp_on(dense), target)
    np.testing.assert_allclose(r.values, np.exp(-target.nodes), atol=2e-4)


def test_resample_identity_and_idempotent(dense):
    g = exp_on(dense)
    assert np.array_equal(resample(g, dense).values, g.values)
    target = make_geometric_grid(1e-3, 20.0, 100)
    once = resample(g, target)
    assert np.array_equal(resample(once, target).values, once.values)


def test_resample_extrapolation(dense):
    with pytest.raises(ExtrapolationError):
        resample(exp_on(dense), make_geometric_grid(1e-3, 100.0, 10))


def test_resample_zero_left_extension():
    src = make_geometric_grid(1.0, 10.0, 20)
    r = resample(GridFunction(src, np.ones(20)), make_geometric_grid(0.1, 10.0, 30))
    assert np.all(r.values[r.grid.nodes < 1.0 - 1e-9] == 0.0)


def test_grid_round_trip():
    for g in (make_geometric_grid(1e-4, 50.0, 512), make_uniform_grid(4.0, 17)):
        assert Grid.from_dict(g.to_dict()) == g
    assert make_geometric_grid(1e-4, 50.0, 8).kind == GEOMETRIC


def test_gridfunction_shape_checked():
    with pytest.raises(ValueError):
        GridFunction(make_uniform_grid(1.0, 4), [1.0, 2.0])
