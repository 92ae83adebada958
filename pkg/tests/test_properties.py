"""Property-based invariants for the numeric building blocks."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from cellpde.density import node_densities
from cellpde.eql import PruneConfig, _quantile_mask, constrained_least_squares
from cellpde.numdiff import lagrange_d1, lagrange_d2

finite = st.floats(min_value=-10.0, max_value=10.0,
                   allow_nan=False, allow_infinity=False)


@given(
    a=finite, b=finite, c=finite,
    gaps=st.lists(st.floats(min_value=0.1, max_value=2.0), min_size=2,
                  max_size=2),
    x0=finite,
)
def test_lagrange_rules_exact_on_random_quadratics(a, b, c, gaps, x0):
    xs = np.array([x0, x0 + gaps[0], x0 + gaps[0] + gaps[1]])
    fs = a * xs ** 2 + b * xs + c
    scale = 1.0 + abs(a) + abs(b) + abs(c) + abs(x0)
    for at in (1, 2, 3):
        want = 2.0 * a * xs[at - 1] + b
        assert abs(lagrange_d1(xs, fs, at) - want) < 1e-9 * scale
    assert abs(lagrange_d2(xs, fs) - 2.0 * a) < 1e-9 * scale


@given(
    spacing=st.floats(min_value=0.05, max_value=5.0),
    n=st.integers(min_value=3, max_value=40),
)
def test_uniform_chain_density_is_reciprocal_spacing(spacing, n):
    x = spacing * np.arange(n)
    q = node_densities(x)
    assert np.allclose(q, 1.0 / spacing, rtol=1e-9)


@given(
    A=hnp.arrays(np.float64, (12, 4), elements=finite),
    b=hnp.arrays(np.float64, (12,), elements=finite),
    pin=st.integers(min_value=0, max_value=3),
)
def test_constrained_solution_satisfies_constraints_and_is_no_better(A, b, pin):
    Q = np.zeros((4, 1))
    Q[pin, 0] = 1.0
    theta_c = constrained_least_squares(A, b, Q, np.array([0.0]))
    assert abs(theta_c[pin]) < 1e-10
    theta_u, *_ = np.linalg.lstsq(A, b, rcond=None)
    r_c = np.linalg.norm(A @ theta_c - b)
    r_u = np.linalg.norm(A @ theta_u - b)
    assert r_c >= r_u - 1e-9 * (1.0 + r_u)


@given(
    values=hnp.arrays(np.float64, st.integers(min_value=5, max_value=60),
                      elements=finite),
    tau_lo=st.floats(min_value=0.0, max_value=0.2),
    tau_hi=st.floats(min_value=0.2, max_value=0.49),
    signed=st.booleans(),
)
def test_quantile_mask_is_monotone_in_tau(values, tau_lo, tau_hi, signed):
    keep_lo = _quantile_mask(values, tau_lo, signed=signed)
    keep_hi = _quantile_mask(values, tau_hi, signed=signed)
    # a wider filter never keeps a row the narrower one dropped
    assert np.all(keep_lo | ~keep_hi)
    assert np.all(_quantile_mask(values, 0.0, signed=signed))


@settings(max_examples=25)
@given(tau=st.floats(min_value=0.0, max_value=0.49))
def test_prune_config_accepts_valid_range(tau):
    cfg = PruneConfig(tau_q=tau, tau_v=tau, tau_t=tau)
    assert cfg.tau_q == tau
