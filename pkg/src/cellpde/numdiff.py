"""Derivative estimation on gridded density data.

All rules come from differentiating the quadratic Lagrange interpolant
through three neighbouring samples, so they are exact on polynomials of
degree two even on non-uniform stencils.  Time derivatives skip the
first save time, where the continuum description does not apply.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .density import DensityGrid

__all__ = [
    "lagrange_d1",
    "lagrange_d2",
    "grid_time_derivative",
    "grid_space_derivatives",
    "leading_edge_velocity",
    "GridDerivatives",
    "grid_derivatives",
]


def _check_stencil(xs):
    xs = np.asarray(xs, dtype=float)
    if xs.size != 3 or xs[0] == xs[1] or xs[0] == xs[2] or xs[1] == xs[2]:
        raise ValueError("need three pairwise distinct abscissae")
    return xs


def lagrange_d1(xs, fs, at: int) -> float:
    """First derivative of the interpolating quadratic at point ``at``
    (1, 2, or 3, matching the stencil ordering)."""
    xs = _check_stencil(xs)
    f1, f2, f3 = np.asarray(fs, dtype=float)
    x1, x2, x3 = xs
    if at == 1:
        return float(
            f1 * (2 * x1 - x2 - x3) / ((x1 - x2) * (x1 - x3))
            + f2 * (x1 - x3) / ((x2 - x1) * (x2 - x3))
            + f3 * (x1 - x2) / ((x3 - x1) * (x3 - x2))
        )
    if at == 2:
        return float(
            f1 * (x2 - x3) / ((x1 - x2) * (x1 - x3))
            + f2 * (2 * x2 - x1 - x3) / ((x2 - x1) * (x2 - x3))
            + f3 * (x2 - x1) / ((x3 - x1) * (x3 - x2))
        )
    if at == 3:
        return float(
            f1 * (x3 - x2) / ((x1 - x2) * (x1 - x3))
            + f2 * (x3 - x1) / ((x2 - x1) * (x2 - x3))
            + f3 * (2 * x3 - x1 - x2) / ((x3 - x1) * (x3 - x2))
        )
    raise ValueError("at must be 1, 2, or 3")


def lagrange_d2(xs, fs) -> float:
    """Second derivative of the interpolating quadratic (constant, so no
    evaluation point is needed)."""
    xs = _check_stencil(xs)
    f1, f2, f3 = np.asarray(fs, dtype=float)
    x1, x2, x3 = xs
    return float(
        2.0 * (
            f1 / ((x1 - x2) * (x1 - x3))
            + f2 / ((x2 - x1) * (x2 - x3))
            + f3 / ((x3 - x1) * (x3 - x2))
        )
    )


def _uniform_spacing(times) -> float:
    dt = np.diff(times)
    if dt.size < 2:
        raise ValueError("need at least 3 times")
    if not np.allclose(dt, dt[0], rtol=1e-9, atol=0.0):
        raise ValueError("save times must be equally spaced")
    return float(dt[0])


def _series_time_derivative(values: np.ndarray, h: float) -> np.ndarray:
    """Three-point rules along axis 0; row 0 is NaN by convention."""
    out = np.full_like(values, np.nan, dtype=float)
    out[1:-1] = (values[2:] - values[:-2]) / (2.0 * h)
    out[-1] = (3.0 * values[-1] - 4.0 * values[-2] + values[-3]) / (2.0 * h)
    return out


def grid_time_derivative(grid: DensityGrid, dq_dx=None, dL_dt=None) -> list:
    """dq/dt at fixed x, sampled at each time's own positions; entry 0
    is all NaN.

    The sample positions move between saves (nodes relax, knot grids
    track the edge), so neighbour-time profiles are compared in the
    scaled frame xi = x / L(t), where every profile covers [0, 1] and no
    extrapolation is needed; the chain-rule term xi dL/dt dq/dx converts
    the scaled-frame rate back to the fixed-frame one.  On static
    domains the correction vanishes and this reduces to interpolating
    neighbour profiles at the current positions.
    """
    h = _uniform_spacing(grid.times)
    M = grid.M
    L = np.asarray(grid.leading_edge, dtype=float)
    if dq_dx is None:
        dq_dx, _ = grid_space_derivatives(grid)
    if dL_dt is None:
        dL_dt = leading_edge_velocity(L, h)

    def at(j, xi):
        return np.interp(xi * L[j], grid.positions[j], grid.densities[j])

    out = [np.full(grid.densities[0].size, np.nan)]
    for j in range(1, M - 1):
        xi = grid.positions[j] / L[j]
        qt = (at(j + 1, xi) - at(j - 1, xi)) / (2.0 * h)
        out.append(qt - xi * dL_dt[j] * dq_dx[j])
    xi = grid.positions[M - 1] / L[M - 1]
    qt = (3.0 * grid.densities[M - 1] - 4.0 * at(M - 2, xi) + at(M - 3, xi)) / (2.0 * h)
    out.append(qt - xi * dL_dt[M - 1] * dq_dx[M - 1])
    return out


def grid_space_derivatives(grid: DensityGrid) -> tuple[list, list]:
    """(dq/dx, d2q/dx2) per time, on possibly non-uniform positions.

    Interior points use the three-point rules; the first derivative at
    either boundary is the two-point secant, which behaves better on
    discrete-density data there.  The second derivative at boundaries
    uses the one-sided three-point rule.
    """
    d1_all, d2_all = [], []
    for x, q in zip(grid.positions, grid.densities):
        n = x.size
        if n < 3:
            raise ValueError("need at least 3 points per time")
        d1 = np.empty(n)
        d2 = np.empty(n)
        for i in range(1, n - 1):
            xs, fs = x[i - 1:i + 2], q[i - 1:i + 2]
            d1[i] = lagrange_d1(xs, fs, 2)
            d2[i] = lagrange_d2(xs, fs)
        d1[0] = (q[1] - q[0]) / (x[1] - x[0])
        d1[-1] = (q[-1] - q[-2]) / (x[-1] - x[-2])
        d2[0] = lagrange_d2(x[:3], q[:3])
        d2[-1] = lagrange_d2(x[-3:], q[-3:])
        d1_all.append(d1)
        d2_all.append(d2)
    return d1_all, d2_all


def leading_edge_velocity(L, h: float) -> np.ndarray:
    """dL/dt series; entry 0 is NaN, interior central, final one-sided."""
    L = np.asarray(L, dtype=float)
    if L.size < 3:
        raise ValueError("need at least 3 times")
    return _series_time_derivative(L, h)


@dataclass(frozen=True)
class GridDerivatives:
    """All derivative fields needed for system assembly."""

    dq_dt: list
    dq_dx: list
    d2q_dx2: list
    dL_dt: np.ndarray


def grid_derivatives(grid: DensityGrid) -> GridDerivatives:
    """Convenience bundle of every derivative estimate for a grid."""
    h = _uniform_spacing(grid.times)
    d1, d2 = grid_space_derivatives(grid)
    dL = leading_edge_velocity(grid.leading_edge, h)
    return GridDerivatives(
        dq_dt=grid_time_derivative(grid, dq_dx=d1, dL_dt=dL),
        dq_dx=d1,
        d2q_dx2=d2,
        dL_dt=dL,
    )
