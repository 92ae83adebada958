"""CSV serialization and content hashing for the experiment pipeline.

All files are UTF-8 CSVs with header rows and RFC-4180-style quoting.
Floats are written with ``repr`` so that a read/write round trip is
bit-exact and identical inputs produce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import io as _io
from pathlib import Path

import numpy as np

from .density import DensityGrid
from .discrete import CellState, Trajectory
from .eql import FitResult
from .fvm import PdeSolution

__all__ = [
    "write_trajectories",
    "read_trajectories",
    "write_density_grid",
    "read_density_grid",
    "write_pde_solution",
    "write_fit_table",
    "write_mechanism_curves",
    "write_rows",
    "content_hash",
]


def _fmt(x) -> str:
    return repr(float(x))


def write_rows(path, header, rows) -> Path:
    """Write one CSV with RFC-4180 quoting; returns the path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = _io.StringIO()
    writer = csv.writer(buf, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def write_trajectories(path, trajectories) -> Path:
    """Trajectory CSV: (realization, time, node_index, position)."""
    rows = []
    for r, traj in enumerate(trajectories):
        for state in traj.states:
            t = _fmt(state.t)
            rows.extend(
                (r, t, i, _fmt(xi)) for i, xi in enumerate(state.x)
            )
    return write_rows(path, ["realization", "time", "node_index", "position"], rows)


def read_trajectories(path) -> list:
    """Inverse of :func:`write_trajectories`."""
    by_real: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            key = (int(row["realization"]), float(row["time"]))
            by_real.setdefault(key, []).append(
                (int(row["node_index"]), float(row["position"]))
            )
    reals: dict = {}
    for (r, t), nodes in by_real.items():
        nodes.sort()
        reals.setdefault(r, []).append(CellState(t, np.array([p for _, p in nodes])))
    out = []
    for r in sorted(reals):
        states = sorted(reals[r], key=lambda s: s.t)
        out.append(Trajectory(states=states))
    return out


def write_density_grid(path, grid: DensityGrid, band=None) -> Path:
    """DensityGrid CSV: (time, knot_index, x, q[, lower, upper]).

    ``band`` is an optional (lower, upper) pair of DensityGrids sharing
    the grid's knots.
    """
    header = ["time", "knot_index", "x", "q"]
    if band is not None:
        header += ["lower", "upper"]
    rows = []
    for j in range(grid.M):
        t = _fmt(grid.times[j])
        for i in range(grid.positions[j].size):
            row = [t, i, _fmt(grid.positions[j][i]), _fmt(grid.densities[j][i])]
            if band is not None:
                row += [_fmt(band[0].densities[j][i]), _fmt(band[1].densities[j][i])]
            rows.append(row)
    return write_rows(path, header, rows)


def read_density_grid(path, kind: str = "averaged") -> DensityGrid:
    """Inverse of :func:`write_density_grid` (band columns ignored)."""
    per_time: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            per_time.setdefault(float(row["time"]), []).append(
                (int(row["knot_index"]), float(row["x"]), float(row["q"]))
            )
    times = sorted(per_time)
    positions, densities = [], []
    for t in times:
        entries = sorted(per_time[t])
        positions.append(np.array([x for _, x, _ in entries]))
        densities.append(np.array([q for _, _, q in entries]))
    return DensityGrid(
        times=np.array(times),
        positions=positions,
        densities=densities,
        leading_edge=np.array([p[-1] for p in positions]),
        kind=kind,
    )


def write_pde_solution(path, sol: PdeSolution) -> Path:
    """PdeSolution CSV: (time, x, q, L)."""
    rows = []
    for j in range(sol.times.size):
        t = _fmt(sol.times[j])
        L = _fmt(sol.leading_edge[j])
        xs = sol.positions(j)
        rows.extend(
            (t, _fmt(x), _fmt(q), L) for x, q in zip(xs, sol.q[j])
        )
    return write_rows(path, ["time", "x", "q", "L"], rows)


def write_fit_table(path, result: FitResult, widths: dict) -> Path:
    """Stepwise trace CSV: one row per step with every coefficient.

    Columns: step, the coefficients of each mechanism in block order,
    loss, and the chosen move as "mech:index" (empty for the incumbent).
    """
    header = ["step"]
    for m in "drhe":
        header.extend(f"theta_{m}{i + 1}" for i in range(widths.get(m, 0)))
    header += ["loss", "chosen_move"]
    rows = []
    for k, step in enumerate(result.steps):
        ch = step.chosen
        row = [k + 1]
        for m in "drhe":
            vec = ch.theta.get(m, np.zeros(widths.get(m, 0)))
            row.extend(_fmt(v) for v in vec)
        move = "" if ch.move is None else f"{ch.move[0]}:{ch.move[1] + 1}"
        row += [_fmt(ch.loss_value), move]
        rows.append(row)
    return write_rows(path, header, rows)


def write_mechanism_curves(path, mechanisms, q_range, n: int = 200) -> Path:
    """Learned-mechanism curve CSV: (q, D, R, H, E) on the density range."""
    q = np.linspace(q_range[0], q_range[1], n)
    cols = {
        "D": mechanisms.D(q),
        "R": mechanisms.R(q),
        "H": mechanisms.H(q),
        "E": mechanisms.E(q),
    }
    rows = [
        [_fmt(qi)] + [_fmt(cols[k][i]) for k in ("D", "R", "H", "E")]
        for i, qi in enumerate(q)
    ]
    return write_rows(path, ["q", "D", "R", "H", "E"], rows)


def content_hash(*paths) -> str:
    """SHA-256 over the bytes of one or more files, in argument order."""
    h = hashlib.sha256()
    for p in paths:
        h.update(Path(p).read_bytes())
    return h.hexdigest()
