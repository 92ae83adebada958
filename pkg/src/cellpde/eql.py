"""Stepwise learning of sparse PDE mechanisms.

The diffusivity D, source R, edge gradient H, and edge flux E are
expanded in small basis libraries of the density.  Density and
derivative data fill a block least-squares system; rows can be pruned by
quantile filters; and a stepwise search toggles one coefficient at a
time, scoring each candidate by re-solving the PDE and measuring the
relative misfit against the data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import null_space

from ._kernel import IntegrationFailure
from .density import DensityGrid
from .fvm import (
    FixedDomain,
    MechanismSet,
    MovingDomain,
    PdeProblem,
    solve as solve_pde,
)
from .numdiff import GridDerivatives, grid_derivatives

__all__ = [
    "BasisLibrary",
    "power_library",
    "reciprocal_library",
    "PruneConfig",
    "DesignSystem",
    "assemble_diffusion_rows",
    "assemble_reaction_rows",
    "assemble_H_rows",
    "assemble_E_rows",
    "assemble_system",
    "prune",
    "least_squares",
    "constrained_least_squares",
    "LearnSetup",
    "loss",
    "stepwise_select",
    "sequential_learn",
    "FitResult",
    "audit_trace",
]

_MECHS = ("d", "r", "h", "e")
_LOG_FLOOR = 1e-300


@dataclass(frozen=True)
class BasisLibrary:
    """Named scalar basis functions with analytic derivatives."""

    labels: tuple
    funcs: tuple
    derivs: tuple

    def __post_init__(self):
        if not (len(self.labels) == len(self.funcs) == len(self.derivs)):
            raise ValueError("labels, funcs, derivs must align")

    def __len__(self) -> int:
        return len(self.funcs)

    def design(self, q) -> np.ndarray:
        """Matrix with column k = phi_k(q)."""
        q = np.asarray(q, dtype=float)
        return np.column_stack([f(q) for f in self.funcs])

    def design_deriv(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        return np.column_stack([g(q) for g in self.derivs])

    def combine(self, coeffs) -> Callable:
        """Callable sum_k coeffs_k phi_k(q)."""
        coeffs = np.asarray(coeffs, dtype=float)

        def f(q):
            q = np.asarray(q, dtype=float)
            out = np.zeros_like(q)
            for c, fn in zip(coeffs, self.funcs):
                if c != 0.0:
                    out = out + c * fn(q)
            return out

        return f


def power_library(exponents: Sequence[int]) -> BasisLibrary:
    """Monomials q^p for the given integer exponents."""

    def make(p):
        return (
            f"q^{p}" if p != 1 else "q",
            lambda q, p=p: q ** p,
            lambda q, p=p: p * q ** (p - 1) if p != 0 else np.zeros_like(q),
        )

    labels, funcs, derivs = zip(*[make(p) for p in exponents])
    return BasisLibrary(labels, funcs, derivs)


def reciprocal_library(orders: Sequence[int]) -> BasisLibrary:
    """Reciprocal powers 1/q^p for the given positive orders."""

    def make(p):
        return (
            f"1/q^{p}" if p != 1 else "1/q",
            lambda q, p=p: q ** (-p),
            lambda q, p=p: -p * q ** (-p - 1),
        )

    labels, funcs, derivs = zip(*[make(p) for p in orders])
    return BasisLibrary(labels, funcs, derivs)


@dataclass(frozen=True)
class PruneConfig:
    """Central-quantile row filters; a threshold of 0 keeps everything.

    Bulk rows are filtered on density and, when enabled, on the spatial
    derivatives (by magnitude), on dq/dt, and on the edge velocity
    dL/dt at the row's time.  Edge-flux rows are filtered on dL/dt.
    Temporal and velocity filters act on the signed values by default;
    set ``signed_* = False`` for magnitudes.
    """

    tau_q: float = 0.0
    tau_dx: float = 0.0
    tau_dxx: float = 0.0
    tau_t: float = 0.0
    tau_v: float = 0.0
    signed_t: bool = True
    signed_v: bool = True

    def __post_init__(self):
        for name in ("tau_q", "tau_dx", "tau_dxx", "tau_t", "tau_v"):
            v = getattr(self, name)
            if not 0.0 <= v < 0.5:
                raise ValueError(f"{name} must lie in [0, 1/2)")


@dataclass(frozen=True)
class DesignSystem:
    """Block least-squares system with row metadata.

    Bulk rows (one per retained (i, j >= 2) data point) carry the
    diffusion and reaction columns against dq/dt; edge rows (one per
    j >= 2) carry the H block against the edge gradient and the E block
    against -q_n dL/dt.  Absent mechanisms have zero-width blocks.
    """

    A_d: np.ndarray
    A_r: np.ndarray
    b_dr: np.ndarray
    A_h: np.ndarray
    b_h: np.ndarray
    A_e: np.ndarray
    b_e: np.ndarray
    bulk_meta: dict
    edge_meta: dict
    q_range: tuple

    def widths(self) -> dict:
        return {
            "d": self.A_d.shape[1],
            "r": self.A_r.shape[1],
            "h": self.A_h.shape[1],
            "e": self.A_e.shape[1],
        }


def _bulk_points(grid: DensityGrid, derivs: GridDerivatives):
    """Flatten all (i, j >= 2) samples with their derivative estimates."""
    qs, d1s, d2s, dts, vs, ii, jj = [], [], [], [], [], [], []
    for j in range(1, grid.M):
        q = grid.densities[j]
        qs.append(q)
        d1s.append(derivs.dq_dx[j])
        d2s.append(derivs.d2q_dx2[j])
        dts.append(derivs.dq_dt[j])
        vs.append(np.full(q.size, derivs.dL_dt[j]))
        ii.append(np.arange(q.size))
        jj.append(np.full(q.size, j))
    return {
        "q": np.concatenate(qs),
        "dq_dx": np.concatenate(d1s),
        "d2q_dx2": np.concatenate(d2s),
        "dq_dt": np.concatenate(dts),
        "dL_dt": np.concatenate(vs),
        "i": np.concatenate(ii),
        "j": np.concatenate(jj),
    }


def assemble_diffusion_rows(grid, derivs, library: BasisLibrary) -> np.ndarray:
    """Column k = dphi_k/dq (dq/dx)^2 + phi_k d2q/dx2, one row per
    (i, j >= 2) sample."""
    pts = _bulk_points(grid, derivs)
    q, d1, d2 = pts["q"], pts["dq_dx"], pts["d2q_dx2"]
    return library.design_deriv(q) * (d1 ** 2)[:, None] + library.design(q) * d2[:, None]


def assemble_reaction_rows(grid, derivs, library: BasisLibrary) -> np.ndarray:
    """Column m = phi_m(q), sharing the dq/dt right-hand side."""
    return library.design(_bulk_points(grid, derivs)["q"])


def _edge_points(grid: DensityGrid, derivs: GridDerivatives):
    q_n = np.array([grid.densities[j][-1] for j in range(1, grid.M)])
    dqdx_n = np.array([derivs.dq_dx[j][-1] for j in range(1, grid.M)])
    return {
        "q": q_n,
        "dq_dx": dqdx_n,
        "dL_dt": derivs.dL_dt[1:],
        "j": np.arange(1, grid.M),
    }


def assemble_H_rows(grid, derivs, library: BasisLibrary):
    """(A, b): phi_k(q_n) against the edge density gradient."""
    pts = _edge_points(grid, derivs)
    return library.design(pts["q"]), pts["dq_dx"].copy()


def assemble_E_rows(grid, derivs, library: BasisLibrary):
    """(A, b): phi_k(q_n) dq_n/dx against -q_n dL/dt."""
    pts = _edge_points(grid, derivs)
    A = library.design(pts["q"]) * pts["dq_dx"][:, None]
    return A, -pts["q"] * pts["dL_dt"]


def assemble_system(
    grid: DensityGrid,
    libraries: dict,
    derivs: GridDerivatives | None = None,
) -> DesignSystem:
    """Build every block present in ``libraries`` (keys in d, r, h, e)."""
    if derivs is None:
        derivs = grid_derivatives(grid)
    bulk = _bulk_points(grid, derivs)
    n_rows = bulk["q"].size
    edge = _edge_points(grid, derivs)
    n_edge = edge["q"].size

    A_d = (
        assemble_diffusion_rows(grid, derivs, libraries["d"])
        if "d" in libraries else np.empty((n_rows, 0))
    )
    A_r = (
        assemble_reaction_rows(grid, derivs, libraries["r"])
        if "r" in libraries else np.empty((n_rows, 0))
    )
    if "h" in libraries:
        A_h, b_h = assemble_H_rows(grid, derivs, libraries["h"])
    else:
        A_h, b_h = np.empty((n_edge, 0)), np.zeros(n_edge)
    if "e" in libraries:
        A_e, b_e = assemble_E_rows(grid, derivs, libraries["e"])
    else:
        A_e, b_e = np.empty((n_edge, 0)), np.zeros(n_edge)
    return DesignSystem(
        A_d=A_d,
        A_r=A_r,
        b_dr=bulk["dq_dt"].copy(),
        A_h=A_h,
        b_h=b_h,
        A_e=A_e,
        b_e=b_e,
        bulk_meta=bulk,
        edge_meta=edge,
        q_range=grid.density_range(),
    )


def _quantile_mask(values, tau, signed=True):
    if tau == 0.0:
        return np.ones(values.size, dtype=bool)
    v = values if signed else np.abs(values)
    lo, hi = np.quantile(v, [tau, 1.0 - tau])
    return (v >= lo) & (v <= hi)


def prune(system: DesignSystem, cfg: PruneConfig) -> DesignSystem:
    """Drop rows whose sample quantities fall outside central quantiles.

    Quantiles are computed over the full pre-prune vectors.  Raises if
    any nonempty block loses all of its rows.
    """
    bulk = system.bulk_meta
    keep = (
        _quantile_mask(bulk["q"], cfg.tau_q)
        & _quantile_mask(bulk["dq_dx"], cfg.tau_dx, signed=False)
        & _quantile_mask(bulk["d2q_dx2"], cfg.tau_dxx, signed=False)
        & _quantile_mask(bulk["dq_dt"], cfg.tau_t, signed=cfg.signed_t)
        & _quantile_mask(bulk["dL_dt"], cfg.tau_v, signed=cfg.signed_v)
    )
    keep_e = _quantile_mask(system.edge_meta["dL_dt"], cfg.tau_v, signed=cfg.signed_v)
    if (system.A_d.shape[1] or system.A_r.shape[1]) and not keep.any():
        raise ValueError("pruning removed every bulk row")
    if system.A_e.shape[1] and not keep_e.any():
        raise ValueError("pruning removed every edge-flux row")
    return replace(
        system,
        A_d=system.A_d[keep],
        A_r=system.A_r[keep],
        b_dr=system.b_dr[keep],
        A_e=system.A_e[keep_e],
        b_e=system.b_e[keep_e],
        # edge_meta stays aligned with the (unpruned) H rows
        bulk_meta={k: v[keep] for k, v in system.bulk_meta.items()},
    )


def _stack_full(system: DesignSystem):
    """Full block system: bulk rows over (d | r), H rows, E rows."""
    w = system.widths()
    p = sum(w.values())
    off = {}
    pos = 0
    for m in _MECHS:
        off[m] = pos
        pos += w[m]
    nb, nh, ne = system.b_dr.size, system.b_h.size, system.b_e.size
    A = np.zeros((nb + nh + ne, p))
    A[:nb, off["d"]:off["d"] + w["d"]] = system.A_d
    A[:nb, off["r"]:off["r"] + w["r"]] = system.A_r
    A[nb:nb + nh, off["h"]:off["h"] + w["h"]] = system.A_h
    A[nb + nh:, off["e"]:off["e"] + w["e"]] = system.A_e
    b = np.concatenate([system.b_dr, system.b_h, system.b_e])
    return A, b, off, w


def constrained_least_squares(A: np.ndarray, b: np.ndarray, Q: np.ndarray, c):
    """Minimize ||A theta - b|| subject to Q^T theta = c.

    Redundant constraint columns are tolerated (a column-space basis is
    taken first); inconsistent ones raise.  Solved by restricting to the
    null space of Q^T, which is algebraically equivalent to the usual
    KKT/projection formula but better conditioned.
    """
    p = A.shape[1]
    if Q.size == 0:
        theta, *_ = np.linalg.lstsq(A, b, rcond=None)
        return theta
    c = np.asarray(c, dtype=float)
    theta_p, *_ = np.linalg.lstsq(Q.T, c, rcond=None)
    if not np.allclose(Q.T @ theta_p, c, rtol=0.0, atol=1e-9 * (1.0 + np.abs(c).max(initial=0.0))):
        raise ValueError("constraints are infeasible")
    N = null_space(Q.T)
    if N.shape[1] == 0:
        return theta_p
    z, *_ = np.linalg.lstsq(A @ N, b - A @ theta_p, rcond=None)
    theta = theta_p + N @ z
    resid = np.abs(Q.T @ theta - c).max(initial=0.0)
    if resid > 1e-10 * (1.0 + np.abs(c).max(initial=0.0)):
        raise RuntimeError(f"constraint residual {resid:.3e} too large")
    return theta


def _unit(p, i):
    v = np.zeros(p)
    v[i] = 1.0
    return v


def _constraint_matrix(system, active, mass_constraint, extra_Q=None, extra_c=None):
    """Q and c pinning inactive coefficients, tying d = e under the mass
    constraint, and appending any user constraints."""
    A, b, off, w = _stack_full(system)
    p = A.shape[1]
    cols, rhs = [], []
    if extra_Q is not None:
        for k in range(extra_Q.shape[1]):
            cols.append(extra_Q[:, k])
            rhs.append(extra_c[k])
    if mass_constraint:
        if w["d"] != w["e"]:
            raise ValueError("mass constraint needs matching d and e libraries")
        for i in range(w["d"]):
            cols.append(_unit(p, off["d"] + i) - _unit(p, off["e"] + i))
            rhs.append(0.0)
    for m in _MECHS:
        for i in range(w[m]):
            if (m, i) in active:
                continue
            if mass_constraint and m == "e":
                continue  # already tied to the d column
            cols.append(_unit(p, off[m] + i))
            rhs.append(0.0)
    Q = np.column_stack(cols) if cols else np.empty((p, 0))
    return A, b, Q, np.array(rhs)


def least_squares(
    system: DesignSystem,
    active,
    mass_constraint: bool = False,
    extra_Q=None,
    extra_c=None,
) -> dict:
    """Least-squares coefficients with inactive entries pinned to zero.

    ``active`` is a collection of (mechanism, index) pairs.  Under the
    mass constraint the e coefficients mirror the d coefficients.
    Returns a dict of per-mechanism coefficient vectors.
    """
    active = frozenset(active)
    A, b, off, w = _stack_full(system)
    _, _, Q, c = _constraint_matrix(system, active, mass_constraint, extra_Q, extra_c)
    theta = constrained_least_squares(A, b, Q, c)
    return {m: theta[off[m]:off[m] + w[m]].copy() for m in _MECHS}


@dataclass(frozen=True)
class LearnSetup:
    """Everything the loss and search need besides the design system.

    ``frozen`` maps a mechanism key to a fixed callable added on top of
    the learned expansion (or standing in for it when the mechanism has
    no library).
    """

    libraries: dict
    geometry: FixedDomain | MovingDomain
    loss_mode: str = "density"  # or "density+edge"
    mass_constraint: bool = False
    frozen: dict = field(default_factory=dict)
    n_c: int = 100
    max_steps: int = 40
    pde_n: int = 500
    rtol: float = 1e-6
    atol: float = 1e-8
    edge_velocity: str = "analytic"
    extra_Q: np.ndarray | None = None
    extra_c: np.ndarray | None = None

    def __post_init__(self):
        if self.loss_mode not in ("density", "density+edge"):
            raise ValueError("unknown loss mode")
        if self.n_c < 2:
            raise ValueError("n_c must be at least 2")

    def mechanism(self, key: str, theta: dict) -> Callable:
        """Learned-plus-frozen callable for one mechanism."""
        parts = []
        if key in self.libraries and key in theta:
            coeffs = theta[key]
            eff = coeffs
            if key == "e" and self.mass_constraint:
                eff = theta["d"]
            if np.any(eff != 0.0):
                parts.append(self.libraries[key].combine(eff))
        if key in self.frozen:
            parts.append(self.frozen[key])
        if not parts:
            return lambda q: np.zeros_like(np.asarray(q, dtype=float))
        if len(parts) == 1:
            return parts[0]
        return lambda q: parts[0](q) + parts[1](q)

    def mechanisms(self, theta: dict) -> MechanismSet:
        return MechanismSet(
            D=self.mechanism("d", theta),
            R=self.mechanism("r", theta),
            H=self.mechanism("h", theta),
            E=self.mechanism("e", theta),
        )


def _count_nonzero(theta: dict, setup: LearnSetup) -> int:
    total = 0
    for m, v in theta.items():
        if m == "e" and setup.mass_constraint:
            continue  # mirrors d, not a free coefficient
        total += int(np.count_nonzero(v))
    return total


def loss(
    theta: dict,
    grid: DensityGrid,
    setup: LearnSetup,
    q_range: tuple | None = None,
) -> float:
    """PDE-solve loss: log mean squared relative density error, plus the
    edge analogue when enabled, plus the active coefficient count.

    Returns +inf if D or E is negative anywhere on the n_c check grid
    over the data's density range, or if the solve fails.
    """
    q_lo, q_hi = q_range if q_range is not None else grid.density_range()
    q_check = np.linspace(max(q_lo, 1e-8), max(q_hi, 1e-8), setup.n_c)
    mech = setup.mechanisms(theta)
    if np.any(mech.D(q_check) < 0.0):
        return math.inf
    has_e = "e" in setup.libraries or "e" in setup.frozen
    if has_e and np.any(mech.E(q_check) < 0.0):
        return math.inf

    x0, q0 = grid.positions[0], grid.densities[0]
    initial = lambda x: np.interp(x, x0, q0)
    edge_rate = None
    if setup.edge_velocity == "data":
        ts = np.asarray(grid.times, dtype=float)
        vs = np.gradient(np.asarray(grid.leading_edge, dtype=float), ts)
        edge_rate = lambda t: np.interp(t, ts, vs)
    problem = PdeProblem(
        mechanisms=mech,
        geometry=setup.geometry,
        initial=initial,
        save_times=grid.times,
        n=setup.pde_n,
        rtol=setup.rtol,
        atol=setup.atol,
        edge_velocity=setup.edge_velocity,
        edge_rate=edge_rate,
    )
    try:
        sol = solve_pde(problem)
    except (
        IntegrationFailure,
        FloatingPointError,
        RuntimeError,  # degenerate mechanisms can make the implicit solver singular
        ValueError,
        ZeroDivisionError,
        np.linalg.LinAlgError,
    ):
        return math.inf

    sq_sum, count = 0.0, 0
    for j in range(1, grid.M):
        xd, qd = grid.positions[j], grid.densities[j]
        xs = sol.positions(j)
        qm = np.interp(xd, xs, sol.q[j])
        qm = np.where(xd > xs[-1], 0.0, qm)  # no density past the model edge
        mask = qd != 0.0
        r = (qd[mask] - qm[mask]) / qd[mask]
        sq_sum += float(r @ r)
        count += int(mask.sum())
    if count == 0:
        return math.inf
    value = math.log(max(sq_sum / count, _LOG_FLOOR))
    if setup.loss_mode == "density+edge":
        Ld = grid.leading_edge[1:]
        Lm = sol.leading_edge[1:]
        re = (Ld - Lm) / Ld
        value += math.log(max(float(re @ re) / re.size, _LOG_FLOOR))
    if math.isnan(value) or math.isinf(value):
        return math.inf
    return value + _count_nonzero(theta, setup)


@dataclass(frozen=True)
class Candidate:
    """One evaluated coefficient vector within a step."""

    move: tuple | None  # toggled (mechanism, index); None for the incumbent
    active: frozenset
    theta: dict
    loss_value: float


@dataclass(frozen=True)
class StepRecord:
    candidates: list
    chosen: Candidate
    zero_excluded: bool


@dataclass(frozen=True)
class FitResult:
    theta: dict
    active: dict
    steps: list
    terminal_loss: float
    stages: list = field(default_factory=list)


def _joint_indices(system: DesignSystem, setup: LearnSetup):
    w = system.widths()
    idx = []
    for m in _MECHS:
        if m == "e" and setup.mass_constraint:
            continue
        idx.extend((m, i) for i in range(w[m]))
    return idx


def _theta_of(system, setup, active):
    try:
        return least_squares(
            system, active,
            mass_constraint=setup.mass_constraint,
            extra_Q=setup.extra_Q, extra_c=setup.extra_c,
        )
    except (ValueError, RuntimeError, np.linalg.LinAlgError):
        return None


def _initial_active(system: DesignSystem, setup: LearnSetup, spec):
    if isinstance(spec, str):
        if spec == "none":
            return frozenset()
        if spec == "all":
            return frozenset(_joint_indices(system, setup))
        raise ValueError("initial active must be 'all', 'none', or explicit pairs")
    return frozenset(spec)


def stepwise_select(
    system: DesignSystem,
    grid: DensityGrid,
    setup: LearnSetup,
    initial_active="all",
) -> FitResult:
    """Greedy one-toggle search over active coefficient sets.

    Every step evaluates the incumbent plus each single add/remove move,
    picks the lowest loss (skipping the all-zero vector in favour of the
    runner-up), and stops when the incumbent wins, a set repeats, or
    max_steps is hit.  Ties prefer fewer active coefficients, then the
    lowest toggled index.
    """
    joint = _joint_indices(system, setup)
    toggle_rank = {key: k for k, key in enumerate(joint)}
    active = _initial_active(system, setup, initial_active)
    cache: dict = {}

    def evaluate(move, act):
        if act not in cache:
            theta = _theta_of(system, setup, act)
            lv = math.inf if theta is None else loss(theta, grid, setup, system.q_range)
            if theta is None:
                theta = {m: np.zeros(system.widths()[m]) for m in _MECHS}
            cache[act] = (theta, lv)
        theta, lv = cache[act]
        return Candidate(move, act, theta, lv)

    def is_zero(cd):
        return all(np.all(v == 0.0) for v in cd.theta.values())

    steps = []
    visited = {active}
    best: Candidate | None = None
    final: Candidate | None = None
    for _ in range(setup.max_steps):
        candidates = [evaluate(None, active)]
        for key in joint:
            act = active - {key} if key in active else active | {key}
            candidates.append(evaluate(key, act))
        order = sorted(
            candidates,
            key=lambda cd: (
                cd.loss_value,
                len(cd.active),
                -1 if cd.move is None else toggle_rank[cd.move],
            ),
        )
        chosen = order[0]
        zero_excluded = False
        if is_zero(chosen) and len(order) > 1:
            chosen = order[1]
            zero_excluded = True
        if math.isinf(chosen.loss_value):
            if not steps:
                raise RuntimeError("no feasible model at the first step")
            break
        steps.append(StepRecord(candidates, chosen, zero_excluded))
        if best is None or chosen.loss_value < best.loss_value:
            best = chosen
        final = chosen
        if chosen.active == active:
            break
        if chosen.active in visited:  # cycle: fall back to the best seen
            final = best
            break
        active = chosen.active
        visited.add(active)
    if final is None:
        final = evaluate(None, active)
    theta = dict(final.theta)
    if setup.mass_constraint and "e" in theta:
        theta["e"] = theta["d"].copy()
    active_sets = {
        m: sorted(i for (mm, i) in final.active if mm == m) for m in _MECHS
    }
    if setup.mass_constraint:
        active_sets["e"] = list(active_sets["d"])
    return FitResult(theta, active_sets, steps, final.loss_value)


def audit_trace(result: FitResult) -> bool:
    """Re-assert the selection rule from the stored candidate losses."""
    for step in result.steps:
        finite = sorted(
            step.candidates, key=lambda cd: (cd.loss_value, len(cd.active))
        )
        if step.zero_excluded:
            expected = finite[1]
        else:
            expected = finite[0]
        if step.chosen.loss_value != expected.loss_value:
            return False
    return True


@dataclass(frozen=True)
class StageSpec:
    """One stage of the sequential four-mechanism procedure.

    ``initial_active`` seeds the stage's stepwise search.  Stages whose
    window starts from a spatially uniform profile need a seed: the
    restricted PDE then evolves identically for every candidate, so a
    cold start cannot separate the basis terms (cf. the free-boundary
    relaxation preset, which is seeded for the same reason).
    """

    mech: str
    grid: DensityGrid
    prune_config: PruneConfig
    setup: LearnSetup
    initial_active: object = "none"


def sequential_learn(stages: Sequence[StageSpec]) -> FitResult:
    """Learn mechanisms one at a time, freezing each result.

    Each stage runs the stepwise search for a single mechanism on its
    own dataset, with previously learned mechanisms substituted as fixed
    callables.  The reaction stage works against the residual right-hand
    side b - A_d theta_d.
    """
    learned: dict = {}
    learned_coeffs: dict = {}
    stage_results = []
    for stage in stages:
        lib = stage.setup.libraries[stage.mech]
        frozen = dict(stage.setup.frozen)
        for m, fn in learned.items():
            frozen[m] = fn
        setup = replace(stage.setup, libraries={stage.mech: lib}, frozen=frozen)
        full_libs = dict(stage.setup.libraries)
        system = assemble_system(stage.grid, {
            k: v for k, v in full_libs.items() if k == stage.mech or
            (stage.mech == "r" and k == "d" and "d" in learned_coeffs)
        })
        if stage.mech == "r" and "d" in learned_coeffs and system.A_d.shape[1]:
            system = replace(
                system,
                b_dr=system.b_dr - system.A_d @ learned_coeffs["d"],
                A_d=np.empty((system.b_dr.size, 0)),
            )
        system = prune(system, stage.prune_config)
        result = stepwise_select(
            system, stage.grid, setup, initial_active=stage.initial_active
        )
        stage_results.append(result)
        coeffs = result.theta[stage.mech]
        learned_coeffs[stage.mech] = coeffs
        learned[stage.mech] = lib.combine(coeffs)
    theta = {m: learned_coeffs.get(m, np.empty(0)) for m in _MECHS}
    active = {m: [] for m in _MECHS}
    for stage, res in zip(stages, stage_results):
        active[stage.mech] = res.active[stage.mech]
    return FitResult(
        theta, active,
        [s for r in stage_results for s in r.steps],
        stage_results[-1].terminal_loss,
        stages=stage_results,
    )
