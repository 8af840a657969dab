"""Brownian path generation and the forward chaos process.

Paths are sampled with a counter-based Philox generator keyed by
(seed, stream), so any (seed, stream) pair reproduces the same draws
regardless of how work is partitioned across workers.
"""

from dataclasses import dataclass

import numpy as np

from .basis import basis_gaussians
from .chaos import monomial_matrix


def rng_stream(seed, stream=0):
    """Deterministic, splittable generator for (seed, stream)."""
    return np.random.Generator(np.random.Philox(key=[int(seed), int(stream)]))


@dataclass(frozen=True)
class TimeGrid:
    points: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.points, dtype=float)
        object.__setattr__(self, "points", t)
        if t.ndim != 1 or len(t) < 2:
            raise ValueError("grid needs at least two points")
        if t[0] != 0.0:
            raise ValueError("grid must start at 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("grid must be strictly increasing")

    @property
    def horizon(self):
        return float(self.points[-1])

    @property
    def n_steps(self):
        return len(self.points) - 1

    @property
    def mesh(self):
        return float(np.max(np.diff(self.points)))

    def refine(self, factor):
        """Insert `factor - 1` equally spaced points into every interval."""
        pts = [self.points[0]]
        for a, b in zip(self.points[:-1], self.points[1:]):
            pts.extend(np.linspace(a, b, factor + 1)[1:])
        return TimeGrid(np.array(pts))


def uniform_grid(horizon, n_steps):
    return TimeGrid(np.linspace(0.0, horizon, n_steps + 1))


def union_grid(*grids):
    """Common refinement of several grids (same horizon required)."""
    horizons = {g.horizon for g in grids}
    if len(horizons) != 1:
        raise ValueError("grids have different horizons")
    pts = np.unique(np.concatenate([g.points for g in grids]))
    return TimeGrid(pts)


@dataclass(frozen=True)
class BrownianPath:
    grid: TimeGrid
    values: np.ndarray  # (n_grid_points, d)
    correlation: np.ndarray  # (d, d)


def correlation_factor(correlation):
    """Lower-triangular factor L with L L^T = correlation.

    Falls back to an eigenvalue factorization for valid but degenerate
    matrices (e.g. |rho| = 1), which yields a reduced-rank driver.
    """
    c = np.asarray(correlation, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError("correlation must be a square matrix")
    if not np.allclose(c, c.T, atol=1e-12):
        raise ValueError("correlation must be symmetric")
    if not np.allclose(np.diag(c), 1.0, atol=1e-12):
        raise ValueError("correlation must have unit diagonal")
    try:
        return np.linalg.cholesky(c)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(c)
        if np.min(w) < -1e-10:
            raise ValueError("correlation matrix is not positive semi-definite")
        return v @ np.diag(np.sqrt(np.clip(w, 0.0, None)))


def sample_paths(grid, d, correlation, n_paths, rng):
    """Batch of Brownian paths as an array of shape (n_paths, n_grid, d).

    Increments over interval k are Normal(0, dt_k * correlation),
    independent across intervals; B_0 = 0.
    """
    factor = correlation_factor(correlation)
    dt = np.diff(grid.points)
    incr = rng.standard_normal((n_paths, grid.n_steps, d))
    incr = incr @ factor.T
    incr *= np.sqrt(dt)[None, :, None]
    values = np.zeros((n_paths, len(grid.points), d))
    np.cumsum(incr, axis=1, out=values[:, 1:, :])
    return values


def sample_path(grid, d, correlation, rng_seed):
    """Single correlated Brownian path, deterministic in rng_seed."""
    values = sample_paths(grid, d, correlation, 1, rng_stream(rng_seed))
    return BrownianPath(grid=grid, values=values[0], correlation=np.asarray(correlation, dtype=float))


@dataclass(frozen=True)
class ForwardState:
    index_set: object
    values: np.ndarray  # (|A|,) or (n_paths, |A|)
    t: float


def forward_states(values, grid, basis, index_set, t):
    """Chaos monomial vector X_t^a for a batch of paths, shape (n_paths, |A|)."""
    g = basis_gaussians(values, grid.points, basis, t)
    return monomial_matrix(index_set, g)


def forward_state(path, basis, index_set, t):
    vals = forward_states(path.values[None, :, :], path.grid, basis, index_set, t)
    return ForwardState(index_set=index_set, values=vals[0], t=float(t))


def _shift_positions(index_set, shifts):
    """Positions of a - shift per index; -1 where the shifted index leaves the family."""
    entries = index_set.entry_matrix()
    out = np.full(len(index_set), -1, dtype=int)
    for k, a in enumerate(entries):
        b = a - shifts
        if np.all(b >= 0):
            out[k] = index_set.position(tuple(int(x) for x in b))
    return out


class SdeCoefficientTable:
    """Precomputed index shifts for the linear SDE of the chaos process.

    Per index a the drift is
        0.5 * sum_k x^{a - 2 e_k} |h_k(t)|^2
        + sum_{j<k} x^{a - e_j - e_k} <h_j(t), h_k(t)>
    and the diffusion row is sum_k x^{a - e_k} h_k(t), with x^a = 0 whenever
    an entry goes negative.  Under the piecewise-constant basis only the
    elements of the active subinterval contribute and their mutual inner
    products vanish (distinct components of e_j are orthogonal), but the
    general cross term is kept and the inner products decide.
    """

    def __init__(self, index_set, basis):
        self.index_set = index_set
        self.basis = basis
        m_d = basis.m_d
        if index_set.m_d != m_d:
            raise ValueError("index set and basis disagree on M_d")
        eye = np.eye(m_d, dtype=int)
        self.sub1 = [(k, _shift_positions(index_set, eye[k])) for k in range(m_d)]
        self.sub2 = [(k, _shift_positions(index_set, 2 * eye[k])) for k in range(m_d)]
        self.sub11 = {}
        for j in range(m_d):
            for k in range(j + 1, m_d):
                self.sub11[(j, k)] = _shift_positions(index_set, eye[j] + eye[k])

    def h_matrix(self, t):
        """h_k(t) stacked as rows, shape (M_d, d)."""
        basis = self.basis
        h = np.zeros((basis.m_d, basis.d))
        i = basis.active_subinterval(t)
        dt = basis.times[i] - basis.times[i - 1]
        for j in range(basis.d):
            h[(i - 1) * basis.d + j, j] = 1.0 / np.sqrt(dt)
        return h

    def drift_diffusion(self, t, state_values):
        """Drift (n, |A|) and diffusion (n, |A|, d) at time t.

        ``state_values`` is (n_paths, |A|); a 1-d vector is also accepted.
        """
        x = np.atleast_2d(np.asarray(state_values, dtype=float))
        n, n_idx = x.shape
        h = self.h_matrix(t)
        norms2 = np.einsum("kd,kd->k", h, h)
        drift = np.zeros((n, n_idx))
        diffusion = np.zeros((n, n_idx, self.basis.d))
        for k, pos in self.sub2:
            if norms2[k] == 0.0:
                continue
            valid = pos >= 0
            drift[:, valid] += 0.5 * norms2[k] * x[:, pos[valid]]
        for (j, k), pos in self.sub11.items():
            dot = float(h[j] @ h[k])
            if dot == 0.0:
                continue
            valid = pos >= 0
            drift[:, valid] += dot * x[:, pos[valid]]
        for k, pos in self.sub1:
            if norms2[k] == 0.0:
                continue
            valid = pos >= 0
            diffusion[:, valid, :] += x[:, pos[valid], None] * h[k][None, None, :]
        return drift, diffusion


def sde_coefficients(t, state, basis):
    """Proposition-style drift/diffusion rows for a single forward state."""
    table = SdeCoefficientTable(state.index_set, basis)
    drift, diffusion = table.drift_diffusion(t, state.values)
    return drift[0], diffusion[0]


def euler_maruyama_forward(x0_values, grid, path_values, basis, index_set):
    """Euler-Maruyama integration of the truncated chaos SDE.

    ``x0_values`` is (n_paths, |A|) at t = 0, ``path_values`` is
    (n_paths, n_grid, d) on the same grid.  Returns (n_paths, n_grid, |A|).
    Used as a verification harness against direct monomial evaluation.
    """
    table = SdeCoefficientTable(index_set, basis)
    n_paths, n_idx = x0_values.shape
    out = np.empty((n_paths, len(grid.points), n_idx))
    out[:, 0, :] = x0_values
    x = np.array(x0_values, dtype=float)
    for k in range(grid.n_steps):
        t_k = grid.points[k]
        dt = grid.points[k + 1] - grid.points[k]
        db = path_values[:, k + 1, :] - path_values[:, k, :]
        drift, diffusion = table.drift_diffusion(t_k, x)
        x = x + drift * dt + np.einsum("nad,nd->na", diffusion, db)
        out[:, k + 1, :] = x
    return out
