"""Shared fixtures and helpers for the test suite."""

import numpy as np
import pytest

from cellpde.density import ensemble_average, trajectory_to_grid
from cellpde.discrete import simulate, simulate_ensemble


def preset_grid(preset, stage, seed=None):
    """Density grid for one preset stage, matching the harness pipeline.

    Deterministic stages produce the raw single-trajectory grid;
    stochastic stages average an ensemble of ``stage.n_s`` realizations
    on ``stage.n_k`` knots.
    """
    config = preset.sim_config(stage)
    initial = preset.initial()
    if stage.n_s is None:
        return trajectory_to_grid(simulate(config, initial))
    base_seed = preset.base_seed if seed is None else seed
    trajectories = simulate_ensemble(config, initial, stage.n_s, base_seed)
    return ensemble_average(trajectories, stage.n_k)


def smallest_positive_root(coeffs):
    """Smallest real positive root of sum_k coeffs[k] q^(k+1)."""
    c = np.concatenate([[0.0], np.asarray(coeffs, dtype=float)])
    nz = np.nonzero(c)[0]
    if nz.size == 0:
        return None
    roots = np.roots(c[: nz.max() + 1][::-1])
    positive = sorted(
        r.real for r in roots if abs(r.imag) < 1e-9 and r.real > 1e-9
    )
    return positive[0] if positive else None


@pytest.fixture
def rng():
    return np.random.default_rng(42)
