"""Reference solvers used to validate the operator scheme.

  backward_euler_fixed  classical regression backward scheme for one fixed
                        terminal condition, with chaos-state features only
  mc_price              discounted risk-neutral Monte Carlo price
  mc_delta              bump-and-revalue first-order sensitivity mapped to z_0
  nested_ce_oracle      brute-force nested conditional expectations (tiny
                        problems only), regression-free
"""

from dataclasses import dataclass

import numpy as np

from .models import eval_generator, eval_terminals, terminal_grid
from .regression import LinearModel, linear_fit, linear_prediction_stderr
from .simulation import TimeGrid, forward_states, rng_stream, sample_paths, union_grid


@dataclass
class FixedSolution:
    """Backward-scheme output for one fixed terminal condition."""

    grid: TimeGrid
    index_set: object
    basis: object
    models: list  # LinearModel per interior step; entry n is None
    y0: float
    z0: np.ndarray
    y0_stderr: float
    z0_stderr: np.ndarray
    # fitted Z at the mean training feature per step, with OLS stderr there
    z_step_values: np.ndarray = None
    z_step_stderrs: np.ndarray = None

    def evaluate(self, i, state_values):
        states = np.atleast_2d(np.asarray(state_values, dtype=float))
        if i == self.grid.n_steps:
            raise ValueError("terminal step has no regression model; evaluate the payoff")
        return self.models[i].predict(states)


def backward_euler_fixed(
    terminal, grid, index_set, basis, gen, n_paths, rng_seed,
    correlation=None, picard_tol=1e-12, picard_max_iter=50,
):
    """Backward regression scheme for a single xi, on the raw payoff.

    Y_n is the payoff itself (not its chaos projection); conditional
    expectations are least-squares fits on the chaos state at t_i.  The
    implicit Y-step is solved by Picard iteration.
    """
    d = basis.d
    if correlation is None:
        correlation = np.eye(d)
    sim_grid = union_grid(grid, TimeGrid(basis.times), terminal_grid(terminal, basis))
    rng = rng_stream(rng_seed, 0)
    values = sample_paths(sim_grid, d, correlation, n_paths, rng)
    pi_pos = np.searchsorted(sim_grid.points, grid.points)
    n = grid.n_steps
    if gen.lip > 0.0 and grid.mesh >= 1.0 / gen.lip:
        raise ValueError("mesh violates the well-definedness bound 1/[g]_L")

    y = eval_terminals(terminal, values, sim_grid, basis)
    models = [None] * (n + 1)
    z_step_values = np.zeros((n, d))
    z_step_stderrs = np.zeros((n, d))
    for i in range(n - 1, -1, -1):
        t_i = grid.points[i]
        dt = grid.points[i + 1] - grid.points[i]
        states = forward_states(values, sim_grid, basis, index_set, t_i)
        db = values[:, pi_pos[i + 1], :] - values[:, pi_pos[i], :]

        z_model = linear_fit(states, y[:, None] * db / dt)
        design = np.concatenate([np.ones((n_paths, 1)), states], axis=1)
        z_hat = design @ z_model.weights

        y_model = linear_fit(states, y)
        y_hat = y_model.predict(states)[0]
        if gen.family != "zero":
            for _ in range(picard_max_iter):
                target = y + dt * eval_generator(gen, t_i, y_hat, z_hat)
                y_model = linear_fit(states, target)
                y_new = y_model.predict(states)[0]
                delta = float(np.max(np.abs(y_new - y_hat)))
                y_hat = y_new
                if delta < picard_tol:
                    break
        weights = np.concatenate([y_model.weights[:, :1], z_model.weights], axis=1)
        models[i] = LinearModel(weights=weights)
        mean_state = states.mean(axis=0, keepdims=True)
        z_step_values[i] = (z_model.weights[0] + mean_state @ z_model.weights[1:])[0]
        z_step_stderrs[i] = _stderr_at(states, y[:, None] * db / dt, z_model, mean_state)
        if i == 0:
            y_target = y + dt * eval_generator(gen, t_i, y_hat, z_hat) if gen.family != "zero" else y
            x0 = states[:1]
            y0_se = linear_prediction_stderr(states, y_target, LinearModel(weights=y_model.weights))[0, 0]
            z0_se = linear_prediction_stderr(states, y[:, None] * db / dt, z_model)[0]
            y0, z0 = models[0].predict(x0)
            sol_y0, sol_z0 = float(y0[0]), z0[0]
        y = y_hat  # the fitted conditional mean is the next step's target

    return FixedSolution(
        grid=grid,
        index_set=index_set,
        basis=basis,
        models=models,
        y0=sol_y0,
        z0=sol_z0,
        y0_stderr=float(y0_se),
        z0_stderr=z0_se,
        z_step_values=z_step_values,
        z_step_stderrs=z_step_stderrs,
    )


def _stderr_at(features, targets, model, point):
    """OLS mean-prediction stderr of ``model`` at one feature row."""
    design = np.concatenate([np.ones((features.shape[0], 1)), features], axis=1)
    resid = targets - design @ model.weights
    dof = max(design.shape[0] - design.shape[1], 1)
    s2 = (resid**2).sum(axis=0) / dof
    gram_inv = np.linalg.pinv(design.T @ design)
    row = np.concatenate([[1.0], point[0]])
    lever = max(float(row @ gram_inv @ row), 0.0)
    return np.sqrt(lever * s2)


@dataclass
class McEstimate:
    value: float
    stderr: float


def mc_price(terminal, basis, n_paths, rng_seed, r, correlation=None, antithetic=False):
    """Discounted mean payoff under the pricing measure (asset drift = r)."""
    if terminal.family not in ("barrier_call", "asian_basket"):
        raise ValueError("Monte Carlo pricing needs an asset-payoff terminal condition")
    terminal = _with_drift(terminal, r)
    d = basis.d
    if correlation is None:
        correlation = np.eye(d)
    grid = union_grid(terminal_grid(terminal, basis), TimeGrid(basis.times))
    rng = rng_stream(rng_seed, 0)
    values = sample_paths(grid, d, correlation, n_paths, rng)
    xi = eval_terminals(terminal, values, grid, basis)
    if antithetic:
        xi = 0.5 * (xi + eval_terminals(terminal, -values, grid, basis))
    disc = np.exp(-r * basis.horizon)
    return McEstimate(
        value=float(disc * xi.mean()),
        stderr=float(disc * xi.std(ddof=1) / np.sqrt(n_paths)),
    )


def mc_delta(terminal, basis, n_paths, rng_seed, r, correlation=None, rel_bump=0.01):
    """z_0 proxy: central-difference dY_0/ds_0 times sigma s_0, per asset.

    Common random numbers across the three revaluations; the discounted
    price itself comes along for free.
    """
    terminal = _with_drift(terminal, r)
    d = basis.d
    if correlation is None:
        correlation = np.eye(d)
    grid = union_grid(terminal_grid(terminal, basis), TimeGrid(basis.times))
    rng = rng_stream(rng_seed, 0)
    values = sample_paths(grid, d, correlation, n_paths, rng)
    disc = np.exp(-r * basis.horizon)
    n_assets = len(terminal.s0)
    z0 = np.zeros(n_assets)
    z0_se = np.zeros(n_assets)
    for k in range(n_assets):
        h = rel_bump * terminal.s0[k]
        up = _with_s0(terminal, k, terminal.s0[k] + h)
        dn = _with_s0(terminal, k, terminal.s0[k] - h)
        diff = (
            eval_terminals(up, values, grid, basis) - eval_terminals(dn, values, grid, basis)
        ) / (2.0 * h)
        delta = disc * diff
        z0[k] = terminal.sigma[k] * terminal.s0[k] * delta.mean()
        z0_se[k] = terminal.sigma[k] * terminal.s0[k] * delta.std(ddof=1) / np.sqrt(n_paths)
    return z0, z0_se


def _with_drift(terminal, r):
    from dataclasses import replace

    return replace(terminal, mu=np.full_like(terminal.mu, float(r)))


def _with_s0(terminal, k, value):
    from dataclasses import replace

    s0 = terminal.s0.copy()
    s0[k] = value
    return replace(terminal, s0=s0)


def nested_ce_oracle(
    terminal, grid, basis, gen, n_outer, n_inner, rng_seed,
    picard_tol=1e-12, picard_max_iter=50,
):
    """(Y_0, Z_0) by brute-force nested simulation, d = 1 and n <= 3 only.

    Conditional expectations at each step are resampled inner averages;
    cost grows like n_inner^n, so this is a validation oracle for tiny
    configurations, free of any regression bias.
    """
    if basis.d != 1:
        raise ValueError("nested oracle supports d = 1 only")
    if grid.n_steps > 3:
        raise ValueError("nested oracle supports at most 3 time steps")
    sim_grid = union_grid(grid, TimeGrid(basis.times), terminal_grid(terminal, basis))
    pi_pos = np.searchsorted(sim_grid.points, grid.points)
    rng = rng_stream(rng_seed, 0)

    def step_value(i, prefix):
        """(Y_i, Z_i) given path values up to grid point pi_pos[i] (shape (k+1, 1))."""
        t_i = grid.points[i]
        if i == grid.n_steps:
            full = TimeGrid(sim_grid.points[: len(prefix)])
            return float(eval_terminals(terminal, prefix[None, :, :], full, basis)[0]), 0.0
        dt = grid.points[i + 1] - t_i
        n_samp = n_outer if i == 0 else n_inner
        seg = sim_grid.points[pi_pos[i] : pi_pos[i + 1] + 1]
        incr = rng.standard_normal((n_samp, len(seg) - 1, 1)) * np.sqrt(np.diff(seg))[None, :, None]
        y_next = np.empty(n_samp)
        db = np.empty(n_samp)
        for s in range(n_samp):
            tail = prefix[-1] + np.cumsum(incr[s], axis=0)
            extended = np.concatenate([prefix, tail], axis=0)
            y_next[s], _ = step_value(i + 1, extended)
            db[s] = tail[-1, 0] - prefix[-1, 0]
        z = float(np.mean(y_next * db) / dt)
        y = float(np.mean(y_next))
        for _ in range(picard_max_iter):
            y_new = float(np.mean(y_next)) + dt * eval_generator(gen, t_i, y, np.array([z]))
            if abs(y_new - y) < picard_tol:
                y = y_new
                break
            y = y_new
        return y, z

    x0 = np.zeros((1, 1))
    y0, z0 = step_value(0, x0)
    return y0, np.array([z0])
