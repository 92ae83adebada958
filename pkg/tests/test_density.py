"""Node densities, ensemble averaging, and confidence bands."""

import numpy as np
import pytest

from cellpde.density import (
    DensityGrid,
    confidence_band,
    ensemble_average,
    ensemble_average_stream,
    node_densities,
    trajectory_to_grid,
)
from cellpde.discrete import CellState, Trajectory


def test_node_densities_uniform_spacing():
    x = np.linspace(0.0, 5.0, 11)
    q = node_densities(x)
    assert np.allclose(q, 2.0, rtol=1e-12)  # 1 / spacing everywhere


def test_node_densities_interior_formula():
    x = np.array([0.0, 1.0, 1.5, 3.0])
    q = node_densities(x)
    assert q[1] == pytest.approx(2.0 / 1.5)
    assert q[2] == pytest.approx(2.0 / 2.0)
    assert q[0] == pytest.approx(2.0 / 1.0 - 2.0 / 1.5)
    assert q[-1] == pytest.approx(2.0 / 1.5 - 2.0 / 2.0)
    with pytest.raises(ValueError):
        node_densities(np.array([0.0, 1.0]))


def _traj(offsets, times=(0.0, 1.0)):
    states = [
        CellState(t, np.array([0.0, 1.0 + offsets, 2.0 + offsets, 3.0 + offsets]))
        for t in times
    ]
    return Trajectory(states)


def test_trajectory_to_grid():
    traj = _traj(0.0)
    grid = trajectory_to_grid(traj)
    assert grid.kind == "raw"
    assert grid.M == 2
    assert np.array_equal(grid.leading_edge, [3.0, 3.0])
    assert np.array_equal(grid.densities[0], node_densities(traj.states[0].x))


def test_ensemble_average_of_identical_trajectories():
    trajectories = [_traj(0.0) for _ in range(3)]
    grid = ensemble_average(trajectories, 10)
    single = ensemble_average([_traj(0.0)], 10)
    assert grid.kind == "averaged"
    for a, b in zip(grid.densities, single.densities):
        assert np.allclose(a, b, rtol=1e-12)


def test_ensemble_average_stream_matches_list_version():
    trajectories = [_traj(d) for d in (0.0, 0.2, 0.4)]
    grid = ensemble_average(trajectories, 12)
    mean_edge = np.mean([t.leading_edge for t in trajectories], axis=0)
    stream = ensemble_average_stream(
        lambda i: trajectories[i], 3, 12,
        mean_edge=mean_edge, times=trajectories[0].times,
    )
    for a, b in zip(grid.densities, stream.densities):
        assert np.array_equal(a, b)
    assert np.array_equal(grid.leading_edge, stream.leading_edge)


def test_ensemble_average_requires_shared_times():
    with pytest.raises(ValueError):
        ensemble_average([_traj(0.0), _traj(0.0, times=(0.0, 2.0))], 5)
    with pytest.raises(ValueError):
        ensemble_average([_traj(0.0)], 1)


def test_interpolation_clamped_at_zero_past_edge():
    # a steeply falling profile extended past the last node must clamp
    states = [CellState(0.0, np.array([0.0, 0.5, 1.0, 2.0]))]
    traj = Trajectory(states)
    grid = ensemble_average_stream(lambda i: traj, 1, 50,
                                   mean_edge=np.array([4.0]),
                                   times=np.array([0.0]))
    assert np.all(grid.densities[0] >= 0.0)
    assert grid.densities[0][-1] == 0.0


def test_confidence_band_brackets_realizations():
    trajectories = [_traj(d) for d in (0.0, 0.1, 0.2, 0.3)]
    lower, upper = confidence_band(trajectories, 10, 0.9)
    mean = ensemble_average(trajectories, 10)
    for lo, hi, mid in zip(lower.densities, upper.densities, mean.densities):
        assert np.all(lo <= hi + 1e-12)
        assert np.all(lo <= mid + 1e-9)
        assert np.all(mid <= hi + 1e-9)
    with pytest.raises(ValueError):
        confidence_band(trajectories[:1], 10, 0.9)
    with pytest.raises(ValueError):
        confidence_band(trajectories, 10, 1.5)


def test_density_grid_validation_and_range():
    with pytest.raises(ValueError):
        DensityGrid(times=np.array([0.0, 1.0]), positions=[np.zeros(3)],
                    densities=[np.zeros(3)], leading_edge=np.array([1.0, 1.0]))
    grid = trajectory_to_grid(_traj(0.0))
    lo, hi = grid.density_range()
    assert lo <= hi
