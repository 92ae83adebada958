"""CSV serialization: round trips, quoting, hashing, determinism."""

import csv

import numpy as np
import pytest

from cellpde import io as cio
from cellpde.density import confidence_band, ensemble_average, trajectory_to_grid
from cellpde.discrete import CellState, Trajectory
from cellpde.eql import Candidate, FitResult, StepRecord


def _trajectories():
    out = []
    for d in (0.0, 0.35):
        states = [
            CellState(t, np.array([0.0, 1.1 + d, 2.0 + d, 3.3 + d + t]))
            for t in (0.0, 0.5, 1.0)
        ]
        out.append(Trajectory(states))
    return out


def test_trajectory_round_trip_is_exact(tmp_path):
    trajectories = _trajectories()
    path = cio.write_trajectories(tmp_path / "t.csv", trajectories)
    back = cio.read_trajectories(path)
    assert len(back) == len(trajectories)
    for a, b in zip(trajectories, back):
        assert np.array_equal(a.times, b.times)
        for sa, sb in zip(a.states, b.states):
            assert np.array_equal(sa.x, sb.x)


def test_density_grid_round_trip_is_exact(tmp_path):
    grid = ensemble_average(_trajectories(), 8)
    path = cio.write_density_grid(tmp_path / "d.csv", grid)
    back = cio.read_density_grid(path)
    assert np.array_equal(grid.times, back.times)
    for a, b in zip(grid.positions, back.positions):
        assert np.array_equal(a, b)
    for a, b in zip(grid.densities, back.densities):
        assert np.array_equal(a, b)
    assert back.kind == "averaged"


def test_density_grid_band_columns(tmp_path):
    trajectories = _trajectories()
    grid = ensemble_average(trajectories, 8)
    band = confidence_band(trajectories, 8, 0.95)
    path = cio.write_density_grid(tmp_path / "b.csv", grid, band=band)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert set(rows[0]) == {"time", "knot_index", "x", "q", "lower", "upper"}
    # reading ignores the band but recovers the means exactly
    back = cio.read_density_grid(path)
    for a, b in zip(grid.densities, back.densities):
        assert np.array_equal(a, b)


def test_write_is_deterministic(tmp_path):
    grid = trajectory_to_grid(_trajectories()[0])
    p1 = cio.write_density_grid(tmp_path / "a.csv", grid)
    p2 = cio.write_density_grid(tmp_path / "b.csv", grid)
    assert p1.read_bytes() == p2.read_bytes()


def test_rfc4180_quoting(tmp_path):
    path = cio.write_rows(tmp_path / "q.csv", ["a", "b"],
                          [["x,y", 'say "hi"'], ["plain", 1]])
    text = path.read_text(encoding="utf-8")
    assert '"x,y"' in text
    assert '"say ""hi"""' in text
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert rows[1] == ["x,y", 'say "hi"']


def test_content_hash_tracks_bytes(tmp_path):
    a = tmp_path / "a.txt"
    b = tmp_path / "b.txt"
    a.write_text("one")
    b.write_text("two")
    h1 = cio.content_hash(a)
    assert h1 == cio.content_hash(a)
    assert h1 != cio.content_hash(b)
    assert cio.content_hash(a, b) != cio.content_hash(b, a)


def test_fit_table_layout(tmp_path):
    theta = {"d": np.array([0.0, 50.0, 0.0]), "r": np.array([0.1, -0.01])}
    cand = Candidate(move=("d", 1), active=frozenset([("d", 1)]),
                     theta=theta, loss_value=-5.0)
    result = FitResult(theta=theta, active={"d": [1], "r": [0, 1]},
                       steps=[StepRecord([cand], cand, False)],
                       terminal_loss=-5.0)
    path = cio.write_fit_table(tmp_path / "fit.csv", result,
                               {"d": 3, "r": 2})
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0]["theta_d2"] == repr(50.0)
    assert rows[0]["chosen_move"] == "d:2"
    assert rows[0]["step"] == "1"


def test_mechanism_curves(tmp_path):
    from cellpde.fvm import MechanismSet
    mech = MechanismSet(D=lambda q: 2.0 / q, R=lambda q: 0.1 * q)
    path = cio.write_mechanism_curves(tmp_path / "c.csv", mech, (1.0, 3.0),
                                      n=5)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 5
    assert float(rows[0]["q"]) == 1.0
    assert float(rows[0]["D"]) == pytest.approx(2.0)
    assert float(rows[-1]["R"]) == pytest.approx(0.3)
