"""Three-point derivative rules: exactness and convergence."""

import numpy as np
import pytest

from cellpde.density import DensityGrid
from cellpde.numdiff import (
    grid_derivatives,
    grid_space_derivatives,
    grid_time_derivative,
    lagrange_d1,
    lagrange_d2,
    leading_edge_velocity,
)

QUADRATICS = [
    (lambda x: 3.0 + 0.0 * x, lambda x: 0.0 * x, lambda x: 0.0 * x),
    (lambda x: 2.0 * x - 1.0, lambda x: 2.0 + 0.0 * x, lambda x: 0.0 * x),
    (
        lambda x: 1.5 * x ** 2 - 0.7 * x + 0.3,
        lambda x: 3.0 * x - 0.7,
        lambda x: 3.0 + 0.0 * x,
    ),
]

STENCILS = [
    np.array([0.0, 1.0, 2.0]),
    np.array([-0.3, 0.4, 2.9]),
    np.array([2.0, 2.7, 3.5]),
]


@pytest.mark.parametrize("stencil", STENCILS)
@pytest.mark.parametrize("f,df,d2f", QUADRATICS)
def test_lagrange_rules_exact_on_quadratics(stencil, f, df, d2f):
    fs = f(stencil)
    for at in (1, 2, 3):
        want = float(df(stencil[at - 1]))
        got = lagrange_d1(stencil, fs, at)
        assert got == pytest.approx(want, rel=1e-12, abs=1e-12)
    assert lagrange_d2(stencil, fs) == pytest.approx(
        float(d2f(stencil[0])), rel=1e-12, abs=1e-12
    )


def test_lagrange_rejects_degenerate_stencils():
    with pytest.raises(ValueError):
        lagrange_d1([0.0, 0.0, 1.0], [1.0, 2.0, 3.0], 2)
    with pytest.raises(ValueError):
        lagrange_d2([0.0, 1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        lagrange_d1([0.0, 1.0, 2.0], [1.0, 2.0, 3.0], 4)


def _static_grid(times, x, values):
    return DensityGrid(
        times=np.asarray(times, dtype=float),
        positions=[x.copy() for _ in times],
        densities=[v for v in values],
        leading_edge=np.full(len(times), x[-1]),
        kind="averaged",
    )


def test_space_derivatives_interior_exact_on_quadratic():
    x = np.sort(np.random.default_rng(0).uniform(0.0, 5.0, 30))
    q = 0.4 * x ** 2 - 1.1 * x + 2.0
    grid = _static_grid([0.0, 1.0, 2.0], x, [q, q, q])
    d1, d2 = grid_space_derivatives(grid)
    assert np.allclose(d1[0][1:-1], 0.8 * x[1:-1] - 1.1, rtol=1e-11, atol=1e-11)
    assert np.allclose(d2[0][1:-1], 0.8, rtol=1e-11, atol=1e-11)
    # boundary second derivative uses the one-sided three-point rule
    assert d2[0][0] == pytest.approx(0.8, rel=1e-11)
    assert d2[0][-1] == pytest.approx(0.8, rel=1e-11)


def test_edge_velocity_exact_on_quadratic_and_nan_convention():
    t = np.linspace(0.0, 2.0, 9)
    L = 3.0 + 0.5 * t - 0.25 * t ** 2
    v = leading_edge_velocity(L, t[1] - t[0])
    assert np.isnan(v[0])
    assert np.allclose(v[1:], 0.5 - 0.5 * t[1:], rtol=1e-12, atol=1e-12)


def test_time_derivative_static_domain_exact_on_quadratic_in_t():
    x = np.linspace(0.0, 1.0, 11)
    t = np.linspace(0.0, 1.0, 6)
    values = [2.0 + 3.0 * tj - tj ** 2 + 0.0 * x for tj in t]
    grid = _static_grid(t, x, values)
    dq_dt = grid_time_derivative(grid)
    assert np.all(np.isnan(dq_dt[0]))
    for j in range(1, t.size):
        assert np.allclose(dq_dt[j], 3.0 - 2.0 * t[j], rtol=1e-10, atol=1e-10)


def _smooth_error(n):
    """Max interior error of dq/dx and d2q/dx2 on sin(x) with n points."""
    x = np.linspace(0.0, np.pi, n)
    q = np.sin(x)
    grid = _static_grid([0.0, 1.0, 2.0], x, [q, q, q])
    d1, d2 = grid_space_derivatives(grid)
    e1 = np.max(np.abs(d1[0][1:-1] - np.cos(x[1:-1])))
    e2 = np.max(np.abs(d2[0][1:-1] + np.sin(x[1:-1])))
    return e1, e2


def test_second_order_convergence_on_smooth_fixture():
    e1_coarse, e2_coarse = _smooth_error(41)
    e1_fine, e2_fine = _smooth_error(81)
    assert e1_coarse / e1_fine >= 3.5
    assert e2_coarse / e2_fine >= 3.5


def test_time_derivative_requires_uniform_times():
    x = np.linspace(0.0, 1.0, 5)
    q = np.ones(5)
    grid = _static_grid([0.0, 0.1, 0.3], x, [q, q, q])
    with pytest.raises(ValueError):
        grid_time_derivative(grid)


def test_grid_derivatives_bundle_is_consistent():
    x = np.linspace(0.0, 2.0, 15)
    t = np.linspace(0.0, 1.0, 5)
    values = [np.exp(-tj) * (1.0 + x) for tj in t]
    grid = _static_grid(t, x, values)
    bundle = grid_derivatives(grid)
    d1, d2 = grid_space_derivatives(grid)
    assert all(np.array_equal(a, b) for a, b in zip(bundle.dq_dx, d1))
    assert all(np.array_equal(a, b) for a, b in zip(bundle.d2q_dx2, d2))
    assert np.isnan(bundle.dL_dt[0])
