"""Discrete cell-chain simulation.

Cells are the intervals between nodes 0 = x_1 < x_2 < ... < x_n. Each
node moves by the overdamped force balance eta dx_i/dt = F(l_{i-1}) -
F(l_i) where l_i is the length of the cell to its right; the left node
is pinned and the right node is either pinned or force-free.  Cells may
divide stochastically once per proliferation window, inserting the
midpoint of the dividing cell as a new node.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from ._kernel import IntegrationFailure, simulate_path

__all__ = [
    "Hookean",
    "InverseHookean",
    "Logistic",
    "Piecewise",
    "Fixed",
    "Free",
    "SimConfig",
    "CellState",
    "Trajectory",
    "force_magnitude",
    "velocity_field",
    "integrate_mechanics",
    "proliferation_step",
    "simulate",
    "simulate_ensemble",
    "fit_initial_positions",
]


@dataclass(frozen=True)
class Hookean:
    """Linear spring: F(l) = k (s - l)."""

    k: float
    s: float

    _law_id = 0

    def __post_init__(self):
        if self.k <= 0 or self.s < 0:
            raise ValueError("require k > 0 and s >= 0")


@dataclass(frozen=True)
class InverseHookean:
    """Inverse-length spring: F(l) = k (1/l - s); its continuum limit
    has a constant diffusivity."""

    k: float
    s: float

    _law_id = 1

    def __post_init__(self):
        if self.k <= 0 or self.s < 0:
            raise ValueError("require k > 0 and s >= 0")


@dataclass(frozen=True)
class Logistic:
    """Per-cell division rate G(l) = beta (1 - 1/(K l)), clamped to
    [0, 1/dt] when evaluated over a window of length dt."""

    beta: float
    K: float

    _prolif_id = 1

    def __post_init__(self):
        if self.beta <= 0 or self.K <= 0:
            raise ValueError("require beta > 0 and K > 0")

    @property
    def _law_param(self):
        return self.K


@dataclass(frozen=True)
class Piecewise:
    """Threshold division rate: G(l) = beta for l >= l_p, else 0."""

    beta: float
    l_p: float

    _prolif_id = 2

    def __post_init__(self):
        if self.beta <= 0 or self.l_p <= 0:
            raise ValueError("require beta > 0 and l_p > 0")

    @property
    def _law_param(self):
        return self.l_p


@dataclass(frozen=True)
class Fixed:
    """Pinned right boundary at x = L."""

    L: float


@dataclass(frozen=True)
class Free:
    """Force-free right boundary."""


@dataclass(frozen=True)
class SimConfig:
    """Full specification of a discrete simulation.

    Parameters
    ----------
    eta : float
        Drag coefficient.
    force : Hookean or InverseHookean
        Spring law shared by all cells.
    boundary : Fixed or Free
        Right-boundary condition; the left node is always pinned at 0.
    save_times : sequence of float
        Strictly increasing times at which states are recorded.
    proliferation : Logistic or Piecewise, optional
        Division law; None disables proliferation.
    dt : float, optional
        Proliferation window; required iff proliferation is set.
    rtol, atol : float
        Mechanics integration tolerances.
    seed : int
        Seed for the division draws.
    """

    eta: float
    force: Hookean | InverseHookean
    boundary: Fixed | Free
    save_times: Sequence[float]
    proliferation: Logistic | Piecewise | None = None
    dt: float | None = None
    rtol: float = 1e-6
    atol: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        ts = np.asarray(self.save_times, dtype=float)
        if ts.size == 0 or np.any(np.diff(ts) <= 0):
            raise ValueError("save_times must be nonempty and strictly increasing")
        if (self.proliferation is not None) != (self.dt is not None):
            raise ValueError("dt is required iff proliferation is set")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self.save_times, dtype=float)


@dataclass(frozen=True)
class CellState:
    """Node positions at a time instant."""

    t: float
    x: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        object.__setattr__(self, "x", x)
        if x.ndim != 1 or x.size < 3:
            raise ValueError("need at least 3 nodes")
        if x[0] != 0.0:
            raise ValueError("first node must sit at 0")
        if np.any(np.diff(x) <= 0):
            raise ValueError("node positions must be strictly increasing")

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.x)


@dataclass(frozen=True)
class Trajectory:
    """States saved at the configured times."""

    states: list[CellState] = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    @property
    def leading_edge(self) -> np.ndarray:
        return np.array([s.x[-1] for s in self.states])


def force_magnitude(law: Hookean | InverseHookean, ell) -> np.ndarray | float:
    """Spring force at cell length ``ell`` (> 0)."""
    ell = np.asarray(ell, dtype=float)
    if np.any(ell <= 0):
        raise ValueError("cell length must be positive")
    if isinstance(law, Hookean):
        f = law.k * (law.s - ell)
    else:
        f = law.k * (1.0 / ell - law.s)
    return f if f.ndim else float(f)


def velocity_field(state: CellState, law, eta: float, boundary) -> np.ndarray:
    """Node velocities under the overdamped force balance.

    The left node is pinned; interior node i moves by (F(l_{i-1}) -
    F(l_i)) / eta; the right node is pinned under Fixed and feels only
    its left spring under Free.
    """
    f = force_magnitude(law, state.lengths)
    v = np.empty(state.n)
    v[0] = 0.0
    v[1:-1] = (f[:-1] - f[1:]) / eta
    v[-1] = 0.0 if isinstance(boundary, Fixed) else f[-1] / eta
    return v


def _kernel_args(config: SimConfig):
    law = config.force
    prolif = config.proliferation
    return dict(
        law_id=law._law_id,
        k=law.k,
        s=law.s,
        eta=config.eta,
        pinned_right=isinstance(config.boundary, Fixed),
        prolif_id=0 if prolif is None else prolif._prolif_id,
        beta=0.0 if prolif is None else prolif.beta,
        law_param=0.0 if prolif is None else prolif._law_param,
        window=config.dt if config.dt is not None else 1.0,
        rtol=config.rtol,
        atol=config.atol,
    )


def integrate_mechanics(state: CellState, config: SimConfig, t_end: float) -> CellState:
    """Advance the mechanics only (no proliferation) to ``t_end``."""
    if t_end < state.t:
        raise ValueError("t_end must not precede the state time")
    if t_end == state.t:
        return state
    empty = np.empty(0)
    saved = simulate_path(
        np.array(state.x, dtype=float),
        state.t,
        np.array([state.t, t_end]),
        **{**_kernel_args(config), "prolif_id": 0},
        n_windows=0,
        u_event=empty,
        u_select=empty,
    )
    return CellState(t_end, saved[-1])


def proliferation_step(state: CellState, config: SimConfig, rng: np.random.Generator) -> CellState:
    """One division draw over a window of length ``config.dt``.

    With probability min(1, sum_i G(l_i) dt) exactly one cell divides,
    chosen proportionally to its rate; the midpoint node is inserted.
    The returned state's time is advanced by dt either way.
    """
    prolif = config.proliferation
    if prolif is None:
        raise ValueError("config has no proliferation law")
    dt = config.dt
    ell = state.lengths
    if prolif._prolif_id == 1:
        g = np.clip(prolif.beta * (1.0 - 1.0 / (prolif.K * ell)), 0.0, 1.0 / dt)
    else:
        g = np.minimum(np.where(ell >= prolif.l_p, prolif.beta, 0.0), 1.0 / dt)
    total = float(g.sum())
    x = state.x
    u_event = rng.random()
    u_select = rng.random()
    if total > 0.0 and u_event < min(1.0, total * dt):
        idx = int(np.searchsorted(np.cumsum(g), u_select * total, side="right"))
        idx = min(idx, g.size - 1)
        x = np.insert(x, idx + 1, 0.5 * (x[idx] + x[idx + 1]))
    return CellState(state.t + dt, x)


def _window_count(config: SimConfig, t0: float) -> int:
    if config.proliferation is None:
        return 0
    span = config.times[-1] - t0
    # windows ending at t0 + j*dt for j = 1..n_windows, within the run
    return int(np.floor(span / config.dt + 1e-9))


def simulate(config: SimConfig, initial: CellState, _seed=None) -> Trajectory:
    """Run one realization, saving states at ``config.save_times``.

    The integration starts at ``initial.t``, which may precede the first
    save time; only the save times are recorded.
    """
    ts = config.times
    if initial.t > ts[0]:
        raise ValueError("initial state is later than the first save time")
    n_windows = _window_count(config, initial.t)
    if n_windows > 0:
        seed = config.seed if _seed is None else _seed
        rng = np.random.default_rng(seed)
        u_event = rng.random(n_windows)
        u_select = rng.random(n_windows)
    else:
        u_event = u_select = np.empty(0)
    try:
        saved = simulate_path(
            np.array(initial.x, dtype=float),
            initial.t,
            ts,
            **_kernel_args(config),
            n_windows=n_windows,
            u_event=u_event,
            u_select=u_select,
        )
    except IntegrationFailure:
        raise
    return Trajectory([CellState(t, x) for t, x in zip(ts, saved)])


def realization_seed(base_seed: int, index: int) -> np.random.SeedSequence:
    """Deterministic, order-independent per-realization seed."""
    return np.random.SeedSequence(base_seed, spawn_key=(index,))


def simulate_ensemble(
    config: SimConfig, initial: CellState, n_s: int, base_seed: int
) -> list[Trajectory]:
    """Run ``n_s`` independent realizations with derived seeds."""
    if n_s < 1:
        raise ValueError("n_s must be at least 1")
    out = []
    for i in range(n_s):
        try:
            out.append(simulate(config, initial, _seed=realization_seed(base_seed, i)))
        except IntegrationFailure as exc:
            raise IntegrationFailure(
                exc.time_reached, f"realization {i}: {exc}"
            ) from exc
    return out


def fit_initial_positions(q0: Callable, n: int, L0: float) -> CellState:
    """Place ``n`` nodes on [0, L0] so the discrete densities match q0.

    Minimizes sum_i (q0(x_i) - q_i(x))^2 over strictly increasing
    interior positions, where q_i are the discrete density formulas.
    The gaps are parameterized through a softmax so every iterate is
    monotone by construction.

    Parameters
    ----------
    q0 : callable
        Target density, positive on [0, L0].
    n : int
        Node count (>= 3); the end nodes are pinned at 0 and L0.
    L0 : float
        Domain length.
    """
    from .density import node_densities

    if n < 3:
        raise ValueError("need at least 3 nodes")
    if L0 <= 0:
        raise ValueError("L0 must be positive")

    def positions(z):
        w = np.exp(z - z.max())
        return L0 * np.concatenate(([0.0], np.cumsum(w) / w.sum()))

    def objective(z):
        x = positions(z)
        r = q0(x) - node_densities(x)
        return float(r @ r)

    z0 = np.zeros(n - 1)
    best = objective(z0)
    res = minimize(objective, z0, method="L-BFGS-B")
    z = res.x if res.fun <= best else z0
    x = positions(z)
    x[-1] = L0
    if np.any(np.diff(x) <= 0):
        raise RuntimeError("optimizer produced a non-monotone configuration")
    return CellState(0.0, x)
