"""Truncated basis of L^2([0,T]; R^d) built from a time partition.

Basis element (i, j), for subinterval i = 1..M and Brownian component
j = 1..d, is the piecewise-constant function
h_i^j(t) = (1/sqrt(dt_i)) 1_{(tbar_{i-1}, tbar_i]}(t) e_j.  Its stochastic
integral against B is a scaled Brownian increment, which is what makes
simulation cheap.  Flattened basis ordering is subinterval-major:
k = (i - 1) * d + (j - 1).
"""

from dataclasses import dataclass

import numpy as np


class GridMismatchError(ValueError):
    """A requested time is not a point of the simulation grid."""


@dataclass(frozen=True)
class BasisSpec:
    """Partition 0 = tbar_0 < ... < tbar_M = T together with the Brownian dimension."""

    times: np.ndarray
    d: int

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", t)
        if t.ndim != 1 or len(t) < 2:
            raise ValueError("basis partition needs at least two points")
        if t[0] != 0.0:
            raise ValueError("basis partition must start at 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("basis partition must be strictly increasing")
        if self.d < 1:
            raise ValueError("d must be >= 1")

    @property
    def horizon(self):
        return float(self.times[-1])

    @property
    def n_subintervals(self):
        return len(self.times) - 1

    @property
    def m_d(self):
        return self.n_subintervals * self.d

    def subinterval_lengths(self):
        return np.diff(self.times)

    def element(self, k):
        """Map flat basis ordinal k to (subinterval i, component j), both 1-based."""
        if not 0 <= k < self.m_d:
            raise IndexError("basis ordinal out of range")
        return k // self.d + 1, k % self.d + 1

    def active_subinterval(self, t):
        """Subinterval i with tbar_{i-1} <= t < tbar_i (right-continuous; T maps to M)."""
        if t < 0.0 or t > self.horizon:
            raise ValueError("time outside the horizon")
        i = int(np.searchsorted(self.times, t, side="right"))
        return min(i, self.n_subintervals)


def _grid_index(grid_points, t):
    k = int(np.searchsorted(grid_points, t))
    if k >= len(grid_points) or grid_points[k] != t:
        raise GridMismatchError(f"time {t} is not on the simulation grid")
    return k


def basis_integral(path, basis, i, j, t):
    """int_0^t h_i^j(s) . dB_s for one basis element.

    Equals 1_{tbar_{i-1} <= t} (B^j_{min(t, tbar_i)} - B^j_{tbar_{i-1}}) / sqrt(dt_i).
    ``t`` and the basis partition points must lie on the path's grid.
    """
    if not 1 <= i <= basis.n_subintervals:
        raise ValueError("subinterval index out of range")
    if not 1 <= j <= basis.d:
        raise ValueError("component index out of range")
    t_lo = basis.times[i - 1]
    t_hi = basis.times[i]
    points = path.grid.points
    _grid_index(points, t)  # the evaluation time itself must be a grid point
    if t <= t_lo:
        return 0.0
    k_lo = _grid_index(points, t_lo)
    k_t = _grid_index(points, min(t, t_hi))
    scale = 1.0 / np.sqrt(t_hi - t_lo)
    return float((path.values[k_t, j - 1] - path.values[k_lo, j - 1]) * scale)


def basis_gaussians(values, grid_points, basis, t):
    """All M_d basis integrals at time t for a batch of paths.

    ``values`` has shape (n_paths, n_grid, d); returns (n_paths, M_d) in
    flat basis order.
    """
    n_paths = values.shape[0]
    out = np.zeros((n_paths, basis.m_d), dtype=float)
    _grid_index(grid_points, t)  # validate t itself up front
    for i in range(1, basis.n_subintervals + 1):
        t_lo = basis.times[i - 1]
        t_hi = basis.times[i]
        if t <= t_lo:
            break
        k_lo = _grid_index(grid_points, t_lo)
        k_t = _grid_index(grid_points, min(t, t_hi))
        inc = (values[:, k_t, :] - values[:, k_lo, :]) / np.sqrt(t_hi - t_lo)
        out[:, (i - 1) * basis.d : i * basis.d] = inc
    return out
