"""Equation learning: libraries, least squares, pruning, stepwise search."""

import math

import numpy as np
import pytest

from cellpde.density import DensityGrid
from cellpde.eql import (
    LearnSetup,
    PruneConfig,
    assemble_system,
    audit_trace,
    constrained_least_squares,
    least_squares,
    loss,
    power_library,
    prune,
    reciprocal_library,
    stepwise_select,
)
from cellpde.fvm import FixedDomain, MechanismSet, PdeProblem, solve_fixed


def test_power_library_values_and_derivatives():
    lib = power_library([0, 1, 2])
    q = np.array([0.5, 2.0])
    design = lib.design(q)
    assert np.allclose(design, np.column_stack([q ** 0, q, q ** 2]))
    deriv = lib.design_deriv(q)
    assert np.allclose(deriv, np.column_stack([0 * q, 1 + 0 * q, 2 * q]))
    f = lib.combine([1.0, 0.0, 3.0])
    assert np.allclose(f(q), 1.0 + 3.0 * q ** 2)
    assert len(lib) == 3


def test_reciprocal_library_values_and_derivatives():
    lib = reciprocal_library([1, 2])
    q = np.array([0.5, 2.0])
    assert np.allclose(lib.design(q), np.column_stack([1 / q, 1 / q ** 2]))
    assert np.allclose(
        lib.design_deriv(q), np.column_stack([-1 / q ** 2, -2 / q ** 3])
    )


def test_prune_config_validation():
    with pytest.raises(ValueError):
        PruneConfig(tau_q=0.5)
    with pytest.raises(ValueError):
        PruneConfig(tau_v=-0.1)


def test_constrained_least_squares_matches_reduced_problem(rng):
    A = rng.normal(size=(40, 5))
    b = rng.normal(size=40)
    # pin theta_1 = 0.3 and tie theta_2 = theta_3
    Q = np.zeros((5, 2))
    Q[0, 0] = 1.0
    Q[1, 1], Q[2, 1] = 1.0, -1.0
    c = np.array([0.3, 0.0])
    theta = constrained_least_squares(A, b, Q, c)
    assert np.max(np.abs(Q.T @ theta - c)) < 1e-10
    # oracle: eliminate the constraints by substitution
    A_red = np.column_stack([A[:, 1] + A[:, 2], A[:, 3], A[:, 4]])
    z, *_ = np.linalg.lstsq(A_red, b - 0.3 * A[:, 0], rcond=None)
    want = np.array([0.3, z[0], z[0], z[1], z[2]])
    assert np.allclose(theta, want, rtol=1e-9, atol=1e-9)


def test_constrained_least_squares_rejects_infeasible(rng):
    A = rng.normal(size=(10, 3))
    b = rng.normal(size=10)
    Q = np.column_stack([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    with pytest.raises(ValueError):
        constrained_least_squares(A, b, Q, np.array([0.0, 1.0]))


def _logistic_grid(beta=0.15, K=15.0, M=41, t_end=40.0):
    """Spatially uniform density following the logistic closed form."""
    times = np.linspace(0.0, t_end, M)
    x = np.linspace(0.0, 10.0, 21)
    q = K / (1.0 + (K - 1.0) * np.exp(-beta * times))
    return DensityGrid(
        times=times,
        positions=[x.copy() for _ in times],
        densities=[np.full(x.size, qt) for qt in q],
        leading_edge=np.full(M, 10.0),
        kind="averaged",
    )


def test_least_squares_recovers_logistic_truth():
    # uniform-field fixture: dq/dt = beta q - (beta/K) q^2 exactly
    beta, K = 0.15, 15.0
    grid = _logistic_grid(beta, K)
    libs = {"r": power_library([1, 2])}
    system = assemble_system(grid, libs)
    theta = least_squares(system, [("r", 0), ("r", 1)])
    assert theta["r"][0] == pytest.approx(beta, abs=1e-3)
    assert theta["r"][1] == pytest.approx(-beta / K, abs=1e-4)


def test_least_squares_pins_inactive_coefficients():
    grid = _logistic_grid()
    libs = {"r": power_library([1, 2, 3])}
    system = assemble_system(grid, libs)
    theta = least_squares(system, [("r", 0)])
    assert theta["r"][1] == 0.0 and theta["r"][2] == 0.0
    assert theta["r"][0] != 0.0


def test_least_squares_stationarity_on_active_columns():
    grid = _logistic_grid()
    libs = {"r": power_library([1, 2])}
    system = assemble_system(grid, libs)
    theta = least_squares(system, [("r", 0), ("r", 1)])
    A, b = system.A_r, system.b_dr
    vec = theta["r"]
    base = np.linalg.norm(A @ vec - b)
    for i in range(2):
        for eps in (1e-6, -1e-6):
            bumped = vec.copy()
            bumped[i] += eps
            assert np.linalg.norm(A @ bumped - b) >= base - 1e-12


def test_mass_constraint_ties_d_and_e_blocks():
    # moving-boundary style grid with mild structure
    times = np.linspace(0.0, 1.0, 11)
    x = np.linspace(0.0, 5.0, 21)
    grids = [2.0 + 0.2 * np.exp(-t) * np.cos(np.pi * x / 5.0) for t in times]
    grid = DensityGrid(times=times, positions=[x.copy() for _ in times],
                       densities=grids, leading_edge=np.full(11, 5.0),
                       kind="averaged")
    libs = {"d": reciprocal_library([1, 2]),
            "h": power_library([1]),
            "e": reciprocal_library([1, 2])}
    system = assemble_system(grid, libs)
    theta = least_squares(
        system, [("d", 0), ("d", 1), ("h", 0)], mass_constraint=True
    )
    # the tie is enforced through the constraint system, so the blocks
    # agree to the constraint residual tolerance
    assert np.max(np.abs(theta["d"] - theta["e"])) < 1e-10


def test_prune_drops_density_quantile_tails():
    grid = _logistic_grid(M=21)
    libs = {"r": power_library([1])}
    system = assemble_system(grid, libs)
    cfg = PruneConfig(tau_q=0.2)
    pruned = prune(system, cfg)
    q = system.bulk_meta["q"]
    lo, hi = np.quantile(q, [0.2, 0.8])
    kept = pruned.bulk_meta["q"]
    assert kept.size == np.count_nonzero((q >= lo) & (q <= hi))
    assert kept.min() >= lo and kept.max() <= hi
    # tau = 0 keeps everything
    assert prune(system, PruneConfig()).b_dr.size == system.b_dr.size


def test_prune_raises_when_every_row_is_dropped():
    grid = _logistic_grid(M=21)
    libs = {"r": power_library([1])}
    system = assemble_system(grid, libs)
    # all dq/dt values positive and distinct: a wide two-sided filter on
    # a tiny row count can empty the system only via a degenerate setup,
    # so force it by masking manually
    from dataclasses import replace as _replace
    empty = system.b_dr[:0]
    broken = _replace(system, A_r=system.A_r[:0], b_dr=empty,
                      bulk_meta={k: v[:0] for k, v in system.bulk_meta.items()})
    with pytest.raises(ValueError):
        prune(broken, PruneConfig())


def _diffusion_fixture():
    """Grid produced by the PDE itself with D = 50 / q^2."""
    D_true = 50.0
    mech = MechanismSet(D=lambda q: D_true / q ** 2)
    x = np.linspace(0.0, 30.0, 151)
    q0 = 2.0 + 1.5 * np.cos(np.pi * x / 30.0)
    times = np.linspace(0.0, 5.0, 26)
    sol = solve_fixed(PdeProblem(
        mechanisms=mech, geometry=FixedDomain(30.0),
        initial=lambda xx: np.interp(xx, x, q0),
        save_times=times, n=151, rtol=1e-9, atol=1e-11,
    ))
    grid = DensityGrid(
        times=times,
        positions=[sol.grid.copy() for _ in times],
        densities=[sol.q[j].copy() for j in range(times.size)],
        leading_edge=np.full(times.size, 30.0),
        kind="averaged",
    )
    return grid, D_true


def test_stepwise_selects_true_diffusion_term():
    grid, D_true = _diffusion_fixture()
    libs = {"d": reciprocal_library([1, 2, 3])}
    system = prune(assemble_system(grid, libs), PruneConfig(tau_q=0.1))
    setup = LearnSetup(libraries=libs, geometry=FixedDomain(30.0),
                       loss_mode="density", pde_n=301)
    result = stepwise_select(system, grid, setup, initial_active="all")
    assert result.active["d"] == [1]
    assert result.theta["d"][1] == pytest.approx(D_true, rel=0.02)
    assert audit_trace(result)


def test_loss_rejects_negative_diffusivity():
    grid, _ = _diffusion_fixture()
    libs = {"d": reciprocal_library([1, 2])}
    setup = LearnSetup(libraries=libs, geometry=FixedDomain(30.0),
                       loss_mode="density", pde_n=101)
    theta = {"d": np.array([-1.0, 0.0])}
    assert loss(theta, grid, setup) == math.inf


def test_loss_counts_active_coefficients():
    beta, K = 0.15, 15.0
    grid = _logistic_grid(beta, K, M=11, t_end=10.0)
    setup2 = LearnSetup(libraries={"r": power_library([1, 2])},
                        geometry=FixedDomain(10.0), loss_mode="density",
                        pde_n=21)
    setup3 = LearnSetup(libraries={"r": power_library([1, 2, 3])},
                        geometry=FixedDomain(10.0), loss_mode="density",
                        pde_n=21)
    value2 = loss({"r": np.array([beta, -beta / K])}, grid, setup2)
    # a negligible extra active coefficient costs one count unit
    value3 = loss({"r": np.array([beta, -beta / K, 1e-13])}, grid, setup3)
    assert math.isfinite(value2)
    assert value3 - value2 == pytest.approx(1.0, abs=0.05)


def test_audit_trace_detects_tampering():
    grid, _ = _diffusion_fixture()
    libs = {"d": reciprocal_library([1, 2])}
    system = prune(assemble_system(grid, libs), PruneConfig(tau_q=0.1))
    setup = LearnSetup(libraries=libs, geometry=FixedDomain(30.0),
                       loss_mode="density", pde_n=151)
    result = stepwise_select(system, grid, setup, initial_active="all")
    assert audit_trace(result)
    from dataclasses import replace as _replace
    step = result.steps[0]
    worst = max(step.candidates, key=lambda cd: cd.loss_value)
    if worst.loss_value > step.chosen.loss_value:
        bad = _replace(step, chosen=worst)
        tampered = _replace(result, steps=[bad] + result.steps[1:])
        assert not audit_trace(tampered)


def test_setup_validation():
    with pytest.raises(ValueError):
        LearnSetup(libraries={}, geometry=FixedDomain(1.0), loss_mode="bogus")
    with pytest.raises(ValueError):
        LearnSetup(libraries={}, geometry=FixedDomain(1.0), n_c=1)
