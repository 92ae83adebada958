"""Finite volume solvers for the conservation PDE.

Fixed domain: dq/dt = d/dx(D(q) dq/dx) + R(q) on [0, L] with zero-flux
ends, vertex-centered volumes (half cells at the ends) and arithmetic
face diffusivities.  Moving domain: the same law on [0, L(t)] with edge
conditions dq/dx = H(q) and q dL/dt = -E(q) dq/dx at x = L(t), mapped to
the unit interval by xi = x / L(t) and solved as a coupled system for
(q_1..q_n, L).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.sparse import lil_matrix

from ._kernel import IntegrationFailure

__all__ = [
    "MechanismSet",
    "FixedDomain",
    "MovingDomain",
    "PdeProblem",
    "PdeSolution",
    "solve_fixed",
    "solve_moving",
    "solve",
    "interpolate_solution",
]

_ZERO = lambda q: np.zeros_like(q)


@dataclass(frozen=True)
class MechanismSet:
    """Density-dependent PDE mechanisms.

    D is the diffusivity, R the source, H the edge density gradient and
    E the edge flux coefficient; the latter two only act on moving
    domains.  All must accept array arguments.
    """

    D: Callable
    R: Callable = _ZERO
    H: Callable = _ZERO
    E: Callable = _ZERO


@dataclass(frozen=True)
class FixedDomain:
    L: float


@dataclass(frozen=True)
class MovingDomain:
    L0: float


@dataclass(frozen=True)
class PdeProblem:
    """A solvable PDE instance.

    Parameters
    ----------
    mechanisms : MechanismSet
    geometry : FixedDomain or MovingDomain
    initial : callable
        Initial density profile q0(x) on the initial domain.
    save_times : sequence of float
    n : int
        Spatial node count.
    rtol, atol : float
        Integration tolerances.
    edge_velocity : str
        Moving-domain edge speed closure: "analytic" uses the H-law
        substitution dL/dt = -E(q_n) H(q_n) / q_n; "gradient" uses the
        one-sided discrete gradient of q at xi = 1 instead of H; "data"
        prescribes the edge speed through ``edge_rate``, for solves
        where the edge mechanisms are fixed at zero and the model
        cannot move the boundary itself.
    edge_rate : callable, optional
        Prescribed dL/dt as a function of t; required iff
        ``edge_velocity == "data"``.
    """

    mechanisms: MechanismSet
    geometry: FixedDomain | MovingDomain
    initial: Callable
    save_times: Sequence[float]
    n: int = 500
    rtol: float = 1e-6
    atol: float = 1e-8
    edge_velocity: str = "analytic"
    edge_rate: Callable | None = None

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("need at least 3 spatial nodes")
        ts = np.asarray(self.save_times, dtype=float)
        if ts.size == 0 or np.any(np.diff(ts) <= 0):
            raise ValueError("save_times must be nonempty and strictly increasing")
        if self.edge_velocity not in ("analytic", "gradient", "data"):
            raise ValueError("edge_velocity must be 'analytic', 'gradient', or 'data'")
        if (self.edge_velocity == "data") != (self.edge_rate is not None):
            raise ValueError("edge_rate is required iff edge_velocity == 'data'")

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self.save_times, dtype=float)


@dataclass(frozen=True)
class PdeSolution:
    """Solution snapshots at the save times.

    ``q`` has shape (M, n); positions(j) gives physical coordinates at
    time index j (xi * L for moving domains).
    """

    times: np.ndarray
    grid: np.ndarray
    q: np.ndarray
    leading_edge: np.ndarray
    moving: bool = False

    def positions(self, j: int) -> np.ndarray:
        return self.grid * self.leading_edge[j] if self.moving else self.grid


def _fixed_rhs(mech, dx, n):
    # volumes: dx interior, dx/2 at the two half cells
    def rhs(t, q):
        qc = np.maximum(q, 0.0)
        D = mech.D(qc)
        R = mech.R(qc)
        flux = 0.5 * (D[:-1] + D[1:]) * (q[1:] - q[:-1]) / dx
        dq = np.empty(n)
        dq[1:-1] = (flux[1:] - flux[:-1]) / dx
        dq[0] = flux[0] / (0.5 * dx)
        dq[-1] = -flux[-1] / (0.5 * dx)
        return dq + R

    return rhs


def _run_ivp(rhs, y0, times, rtol, atol, **kw):
    sol = solve_ivp(
        rhs,
        (times[0], times[-1]),
        y0,
        method=kw.pop("method", "LSODA"),
        t_eval=times,
        rtol=rtol,
        atol=atol,
        **kw,
    )
    if not sol.success:
        raise IntegrationFailure(sol.t[-1] if sol.t.size else times[0], sol.message)
    return sol


def solve_fixed(problem: PdeProblem) -> PdeSolution:
    """Method-of-lines solve on a fixed domain."""
    if not isinstance(problem.geometry, FixedDomain):
        raise ValueError("solve_fixed requires FixedDomain geometry")
    L = problem.geometry.L
    n = problem.n
    x = np.linspace(0.0, L, n)
    dx = x[1] - x[0]
    times = problem.times
    q0 = np.asarray(problem.initial(x), dtype=float)
    sol = _run_ivp(
        _fixed_rhs(problem.mechanisms, dx, n), q0, times,
        problem.rtol, problem.atol, lband=1, uband=1,
    )
    q = sol.y.T.copy()
    if not np.all(np.isfinite(q)):
        bad = int(np.argmax(~np.all(np.isfinite(q), axis=1)))
        raise IntegrationFailure(times[bad], "non-finite density")
    return PdeSolution(times, x, q, np.full(times.size, L), moving=False)


def _moving_rhs(mech, xi, dxi, n, edge_velocity, edge_rate=None):
    e = np.minimum(xi + 0.5 * dxi, 1.0)
    w = np.maximum(xi - 0.5 * dxi, 0.0)
    V = e - w

    def rhs(t, y):
        q = y[:-1]
        L = y[-1]
        qc = np.maximum(q, 0.0)
        D = mech.D(qc)
        R = mech.R(qc)
        qn = qc[-1]
        Hn = float(mech.H(qn))
        En = float(mech.E(qn))
        if edge_velocity == "analytic":
            dLdt = -En * Hn / qn if qn > 0 else 0.0
        elif edge_velocity == "data":
            dLdt = float(edge_rate(t))
        else:
            # one-sided gradient at xi = 1 in physical coordinates
            dqdx = (q[-1] - q[-2]) / (dxi * L)
            dLdt = -En * dqdx / qn if qn > 0 else 0.0
        qe = 0.5 * (q[:-1] + q[1:])
        De = 0.5 * (D[:-1] + D[1:])
        flux = De * (q[1:] - q[:-1]) / dxi
        dq = np.empty(n)
        # interior: advective remap term plus diffusion in xi
        adv = np.empty(n)
        adv[1:-1] = (e[1:-1] * qe[1:] - w[1:-1] * qe[:-1]) / V[1:-1]
        adv[0] = e[0] * qe[0] / V[0]
        adv[-1] = (q[-1] - w[-1] * qe[-1]) / V[-1]
        dq[1:-1] = (flux[1:] - flux[:-1]) / (V[1:-1] * L * L)
        dq[0] = flux[0] / (V[0] * L * L)
        dq[-1] = (D[-1] * L * Hn - flux[-1]) / (V[-1] * L * L)
        dq += (dLdt / L) * (adv - q) + R
        return np.append(dq, dLdt)

    return rhs


def _moving_sparsity(n):
    S = lil_matrix((n + 1, n + 1), dtype=float)
    for i in range(n):
        for j in (i - 1, i, i + 1):
            if 0 <= j < n:
                S[i, j] = 1.0
        S[i, n] = 1.0
        S[i, n - 1] = 1.0
        S[i, n - 2] = 1.0
    S[n, n] = 1.0
    S[n, n - 1] = 1.0
    S[n, n - 2] = 1.0
    return S.tocsr()


def solve_moving(problem: PdeProblem) -> PdeSolution:
    """Landau-transformed solve on a moving domain."""
    if not isinstance(problem.geometry, MovingDomain):
        raise ValueError("solve_moving requires MovingDomain geometry")
    L0 = problem.geometry.L0
    n = problem.n
    xi = np.linspace(0.0, 1.0, n)
    dxi = xi[1] - xi[0]
    times = problem.times
    q0 = np.asarray(problem.initial(xi * L0), dtype=float)
    y0 = np.append(q0, L0)
    sol = _run_ivp(
        _moving_rhs(problem.mechanisms, xi, dxi, n, problem.edge_velocity,
                    problem.edge_rate),
        y0, times, problem.rtol, problem.atol,
        method="BDF", jac_sparsity=_moving_sparsity(n),
    )
    y = sol.y.T
    q = y[:, :-1].copy()
    L = y[:, -1].copy()
    if not np.all(np.isfinite(q)) or np.any(L <= 0):
        bad = np.where(~np.all(np.isfinite(q), axis=1) | (L <= 0))[0][0]
        raise IntegrationFailure(times[bad], "non-finite density or collapsed domain")
    return PdeSolution(times, xi, q, L, moving=True)


def solve(problem: PdeProblem) -> PdeSolution:
    """Dispatch on geometry."""
    if isinstance(problem.geometry, FixedDomain):
        return solve_fixed(problem)
    return solve_moving(problem)


def interpolate_solution(sol: PdeSolution, x, t_j: float):
    """Density at position(s) ``x`` and save time ``t_j``."""
    matches = np.where(np.isclose(sol.times, t_j, rtol=1e-12, atol=1e-12))[0]
    if matches.size == 0:
        raise ValueError(f"t = {t_j} is not a save time")
    j = int(matches[0])
    xs = sol.positions(j)
    x = np.asarray(x, dtype=float)
    if np.any(x < xs[0] - 1e-12) or np.any(x > xs[-1] + 1e-12):
        raise ValueError("position outside the domain")
    return np.interp(x, xs, sol.q[j])
