"""Generator functions g(t, y, z) and terminal-condition functionals.

Generator families:
  zero            g = 0
  linear_rate     g = -r y - theta . z
  trig            g = cos(y) + sum_j sin(z_j)
  borrowing_rate  g = -r y - theta . z + (R - r) (y - sum_k (Sigma^-1 z)_k)_-

Terminal families:
  power_max       sum_i dt_i |B_{t_{i+1}}|^P - P max_i B_{t_i}
  barrier_call    (S_T - K)_+ 1{S_{t_i} >= L for all monitoring points}
  asian_basket    ((1/2) sum_j sum_i dt_i S^j_{t_i} - K)_+
  chaos_synthetic sum_a d_a X_T^a for explicitly supplied coefficients
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class GeneratorSpec:
    family: str
    r: float = 0.0
    theta: np.ndarray = None
    big_r: float = 0.0
    sigma_mat: np.ndarray = None
    sigma_inv: np.ndarray = field(default=None, repr=False)
    lip: float = 0.0


def zero_generator():
    return GeneratorSpec(family="zero", lip=0.0)


def linear_rate_generator(r, theta):
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    lip = max(abs(r), float(np.linalg.norm(theta)))
    return GeneratorSpec(family="linear_rate", r=float(r), theta=theta, lip=lip)


def trig_generator():
    # cos is 1-Lipschitz in y and sin is 1-Lipschitz in each z_j.
    return GeneratorSpec(family="trig", lip=1.0)


def borrowing_rate_generator(r, big_r, mu, sigma, rho):
    """Two-rate pricing generator; theta and Sigma derived from the market data."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    d = len(mu)
    corr = rho * np.ones((d, d)) + (1.0 - rho) * np.eye(d)
    chol = np.linalg.cholesky(corr)
    sigma_mat = sigma[:, None] * chol
    try:
        sigma_inv = np.linalg.inv(sigma_mat)
    except np.linalg.LinAlgError as exc:
        raise ValueError("volatility matrix is singular") from exc
    theta = sigma_inv @ (mu - r * np.ones(d))
    ones_row = np.ones(d) @ sigma_inv  # row vector 1^T Sigma^-1
    lip = abs(r) + float(np.linalg.norm(theta)) + (big_r - r) * (
        1.0 + float(np.linalg.norm(ones_row))
    )
    return GeneratorSpec(
        family="borrowing_rate",
        r=float(r),
        big_r=float(big_r),
        theta=theta,
        sigma_mat=sigma_mat,
        sigma_inv=sigma_inv,
        lip=lip,
    )


def eval_generator(gen, t, y, z):
    """g(t, y, z); ``y`` shape (n,), ``z`` shape (n, d) (scalars broadcast)."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    scalar = y.ndim == 0
    y = np.atleast_1d(y)
    z = z.reshape(len(y), -1)
    if gen.family == "zero":
        out = np.zeros_like(y)
    elif gen.family == "linear_rate":
        out = -gen.r * y - z @ gen.theta
    elif gen.family == "trig":
        out = np.cos(y) + np.sin(z).sum(axis=1)
    elif gen.family == "borrowing_rate":
        w = y - (z @ gen.sigma_inv.T).sum(axis=1)
        out = -gen.r * y - z @ gen.theta + (gen.big_r - gen.r) * np.maximum(-w, 0.0)
    else:
        raise ValueError(f"unknown generator family {gen.family!r}")
    return float(out[0]) if scalar else out


def generator_gradient(gen, t, y, z):
    """(dg/dy, dg/dz) with the same batch conventions as eval_generator.

    The negative-part kink of the borrowing-rate family takes subgradient 0.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    z = np.asarray(z, dtype=float).reshape(len(y), -1)
    n, d = z.shape
    if gen.family == "zero":
        return np.zeros(n), np.zeros((n, d))
    if gen.family == "linear_rate":
        return np.full(n, -gen.r), np.broadcast_to(-gen.theta, (n, d)).copy()
    if gen.family == "trig":
        return -np.sin(y), np.cos(z)
    if gen.family == "borrowing_rate":
        w = y - (z @ gen.sigma_inv.T).sum(axis=1)
        active = (w < 0.0).astype(float)
        dy = -gen.r - (gen.big_r - gen.r) * active
        ones_row = np.ones(d) @ gen.sigma_inv
        dz = np.broadcast_to(-gen.theta, (n, d)).copy()
        dz += (gen.big_r - gen.r) * active[:, None] * ones_row[None, :]
        return dy, dz
    raise ValueError(f"unknown generator family {gen.family!r}")


@dataclass(frozen=True)
class TerminalSpec:
    family: str
    eval_times: np.ndarray = None  # monitoring points for path-dependent payoffs
    power: float = 0.0
    strike: float = 0.0
    barrier: float = 0.0
    s0: np.ndarray = None
    mu: np.ndarray = None
    sigma: np.ndarray = None
    coefficients: object = None  # ChaosCoefficients for chaos_synthetic


def power_max_terminal(power, eval_times):
    return TerminalSpec(
        family="power_max", power=float(power), eval_times=np.asarray(eval_times, dtype=float)
    )


def barrier_call_terminal(strike, barrier, s0, mu, sigma, eval_times):
    return TerminalSpec(
        family="barrier_call",
        strike=float(strike),
        barrier=float(barrier),
        s0=np.atleast_1d(np.asarray(s0, dtype=float)),
        mu=np.atleast_1d(np.asarray(mu, dtype=float)),
        sigma=np.atleast_1d(np.asarray(sigma, dtype=float)),
        eval_times=np.asarray(eval_times, dtype=float),
    )


def asian_basket_terminal(strike, s0, mu, sigma, eval_times):
    return TerminalSpec(
        family="asian_basket",
        strike=float(strike),
        s0=np.atleast_1d(np.asarray(s0, dtype=float)),
        mu=np.atleast_1d(np.asarray(mu, dtype=float)),
        sigma=np.atleast_1d(np.asarray(sigma, dtype=float)),
        eval_times=np.asarray(eval_times, dtype=float),
    )


def chaos_synthetic_terminal(coefficients):
    return TerminalSpec(
        family="chaos_synthetic",
        coefficients=coefficients,
        eval_times=np.asarray(coefficients.basis.times, dtype=float),
    )


def terminal_grid(terminal, basis):
    """Minimal simulation grid the payoff needs (its monitoring points)."""
    from .simulation import TimeGrid

    if terminal.eval_times is None:
        return TimeGrid(basis.times)
    return TimeGrid(terminal.eval_times)


def asset_paths(values, grid, s0, mu, sigma):
    """Geometric Brownian assets at every grid point (exact transform).

    ``values`` is (n_paths, n_grid, d); returns (n_paths, n_grid, n_assets).
    """
    s0 = np.atleast_1d(np.asarray(s0, dtype=float))
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    t = grid.points[None, :, None]
    drift = (mu - 0.5 * sigma**2)[None, None, :] * t
    return s0[None, None, :] * np.exp(drift + sigma[None, None, :] * values)


def _grid_positions(grid_points, times):
    pos = np.searchsorted(grid_points, times)
    if np.any(pos >= len(grid_points)) or np.any(grid_points[pos] != times):
        from .basis import GridMismatchError

        raise GridMismatchError("payoff monitoring points missing from simulation grid")
    return pos


def eval_terminals(terminal, values, grid, basis):
    """Payoff per path for a batch, shape (n_paths,)."""
    if terminal.family == "power_max":
        pos = _grid_positions(grid.points, terminal.eval_times)
        dts = np.diff(terminal.eval_times)
        b = values[:, pos, 0]  # d = 1 payoff on the first component
        p = terminal.power
        if p == 0.0:
            powers = np.ones_like(b[:, 1:])  # |0|^0 := 1
        else:
            powers = np.abs(b[:, 1:]) ** p
        running_max = b[:, 1:].max(axis=1)
        return powers @ dts - p * running_max
    if terminal.family == "barrier_call":
        pos = _grid_positions(grid.points, terminal.eval_times)
        s = asset_paths(values, grid, terminal.s0, terminal.mu, terminal.sigma)[:, :, 0]
        monitored = s[:, pos]
        alive = np.all(monitored >= terminal.barrier, axis=1)
        return np.maximum(s[:, -1] - terminal.strike, 0.0) * alive
    if terminal.family == "asian_basket":
        pos = _grid_positions(grid.points, terminal.eval_times)
        s = asset_paths(values, grid, terminal.s0, terminal.mu, terminal.sigma)
        dts = np.diff(terminal.eval_times)
        avg = 0.0
        for j in range(s.shape[2]):
            avg = avg + s[:, pos[:-1], j] @ dts  # left endpoints, per the discrete average
        return np.maximum(0.5 * avg - terminal.strike, 0.0)
    if terminal.family == "chaos_synthetic":
        from .basis import basis_gaussians
        from .chaos import monomial_matrix

        coeffs = terminal.coefficients
        g = basis_gaussians(values, grid.points, coeffs.basis, coeffs.basis.horizon)
        return monomial_matrix(coeffs.index_set, g) @ coeffs.values
    raise ValueError(f"unknown terminal family {terminal.family!r}")


def eval_terminal(terminal, path):
    """Payoff of a single BrownianPath."""
    from .basis import BasisSpec

    basis = BasisSpec(times=path.grid.points, d=path.values.shape[1])
    return float(eval_terminals(terminal, path.values[None, :, :], path.grid, basis)[0])
