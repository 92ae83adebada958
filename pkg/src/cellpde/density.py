"""Node densities and ensemble averaging.

A node's density is the reciprocal of the average length of its two
adjacent cells, with one-sided corrections at the chain ends.  Ensembles
are averaged by evaluating each realization's linear density interpolant
on a shared knot grid spanning [0, mean leading edge] per time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .discrete import CellState, Trajectory

__all__ = [
    "DensityGrid",
    "node_densities",
    "trajectory_to_grid",
    "ensemble_average",
    "ensemble_average_stream",
    "confidence_band",
]


@dataclass(frozen=True)
class DensityGrid:
    """Per-time density samples.

    Parameters
    ----------
    times : ndarray, shape (M,)
        Save times.
    positions : list of ndarray
        Sample positions at each time (node positions or knots).
    densities : list of ndarray
        Densities at the matching positions.
    leading_edge : ndarray, shape (M,)
        Rightmost position series (mean over the ensemble when averaged).
    kind : str
        "raw" for a single trajectory, "averaged" for an ensemble mean.
    """

    times: np.ndarray
    positions: list
    densities: list
    leading_edge: np.ndarray
    kind: str = "raw"

    def __post_init__(self):
        if not (len(self.positions) == len(self.densities) == self.times.size):
            raise ValueError("per-time arrays must align with times")

    @property
    def M(self) -> int:
        return self.times.size

    def density_range(self) -> tuple[float, float]:
        """(min, max) over every stored density value."""
        lo = min(float(q.min()) for q in self.densities)
        hi = max(float(q.max()) for q in self.densities)
        return lo, hi


def node_densities(x) -> np.ndarray:
    """Densities at the nodes of one state.

    Interior: q_i = 2 / (x_{i+1} - x_{i-1}).  Ends use the one-sided
    corrections q_1 = 2/x_2 - 2/x_3 and q_n = 2/(x_n - x_{n-1}) -
    2/(x_n - x_{n-2}), which can be negative for strongly uneven end
    spacing; they are reported as computed.
    """
    if isinstance(x, CellState):
        x = x.x
    x = np.asarray(x, dtype=float)
    if x.size < 3:
        raise ValueError("need at least 3 nodes")
    q = np.empty_like(x)
    q[1:-1] = 2.0 / (x[2:] - x[:-2])
    q[0] = 2.0 / (x[1] - x[0]) - 2.0 / (x[2] - x[0])
    q[-1] = 2.0 / (x[-1] - x[-2]) - 2.0 / (x[-1] - x[-3])
    return q


def trajectory_to_grid(traj: Trajectory) -> DensityGrid:
    """Raw density grid of a single trajectory."""
    return DensityGrid(
        times=traj.times,
        positions=[s.x.copy() for s in traj.states],
        densities=[node_densities(s.x) for s in traj.states],
        leading_edge=traj.leading_edge,
        kind="raw",
    )


def _interp_clamped(x_nodes, q_nodes, xq):
    """Linear interpolant of (x_nodes, q_nodes) at xq, extended linearly
    past the last node and clamped at 0."""
    q = np.interp(xq, x_nodes, q_nodes)
    beyond = xq > x_nodes[-1]
    if np.any(beyond):
        slope = (q_nodes[-1] - q_nodes[-2]) / (x_nodes[-1] - x_nodes[-2])
        q = np.where(beyond, q_nodes[-1] + slope * (xq - x_nodes[-1]), q)
    return np.maximum(q, 0.0)


def _check_shared_times(trajectories):
    t0 = trajectories[0].times
    for traj in trajectories[1:]:
        if traj.times.size != t0.size or np.any(traj.times != t0):
            raise ValueError("trajectories must share save times")
    return t0


def ensemble_average(trajectories: list[Trajectory], n_k: int) -> DensityGrid:
    """Mean density of an ensemble on per-time knot grids.

    Knots are equally spaced on [0, mean leading edge] at each time.
    Each realization contributes its clamped linear interpolant values.
    """
    mean_edge = np.mean([t.leading_edge for t in trajectories], axis=0)
    return ensemble_average_stream(
        lambda i: trajectories[i], len(trajectories), n_k,
        mean_edge=mean_edge, times=_check_shared_times(trajectories),
    )


def ensemble_average_stream(
    factory: Callable[[int], Trajectory],
    n_s: int,
    n_k: int,
    mean_edge=None,
    times=None,
) -> DensityGrid:
    """Ensemble average without holding all realizations in memory.

    ``factory(i)`` produces realization i on demand.  If ``mean_edge``
    is unknown (moving boundary) a first pass accumulates it, and the
    factory is invoked twice per realization; pass the constant edge for
    fixed domains to skip that pass.
    """
    if n_k < 2:
        raise ValueError("n_k must be at least 2")
    if mean_edge is None:
        acc = None
        for i in range(n_s):
            traj = factory(i)
            edge = traj.leading_edge
            if times is None:
                times = traj.times
            acc = edge if acc is None else acc + edge
        mean_edge = acc / n_s
    mean_edge = np.asarray(mean_edge, dtype=float)
    knots = [np.linspace(0.0, L, n_k) for L in mean_edge]
    total = [np.zeros(n_k) for _ in mean_edge]
    for i in range(n_s):
        traj = factory(i)
        if times is None:
            times = traj.times
        for j, state in enumerate(traj.states):
            total[j] += _interp_clamped(state.x, node_densities(state.x), knots[j])
    return DensityGrid(
        times=np.asarray(times, dtype=float),
        positions=knots,
        densities=[s / n_s for s in total],
        leading_edge=mean_edge,
        kind="averaged",
    )


def confidence_band(
    trajectories: list[Trajectory], n_k: int, level: float
) -> tuple[DensityGrid, DensityGrid]:
    """Pointwise empirical quantile band across realizations.

    Returns (lower, upper) grids at the (1 - level)/2 and (1 + level)/2
    quantiles on the same knots as the ensemble average.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    if len(trajectories) < 2:
        raise ValueError("need at least 2 realizations for a band")
    times = _check_shared_times(trajectories)
    mean_edge = np.mean([t.leading_edge for t in trajectories], axis=0)
    knots = [np.linspace(0.0, L, n_k) for L in mean_edge]
    lo_q, hi_q = (1.0 - level) / 2.0, (1.0 + level) / 2.0
    lower, upper = [], []
    for j in range(times.size):
        vals = np.array([
            _interp_clamped(t.states[j].x, node_densities(t.states[j].x), knots[j])
            for t in trajectories
        ])
        lower.append(np.quantile(vals, lo_q, axis=0))
        upper.append(np.quantile(vals, hi_q, axis=0))
    mk = lambda dens: DensityGrid(
        times=times,
        positions=[k.copy() for k in knots],
        densities=dens,
        leading_edge=mean_edge.copy(),
        kind="averaged",
    )
    return mk(lower), mk(upper)
