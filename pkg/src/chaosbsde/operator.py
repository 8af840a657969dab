"""Backward-in-time training of the solution-operator maps.

Each time step i < n carries one trained regressor mapping
(forward chaos state at t_i, coefficient vector of the terminal condition)
to (y, z).  The terminal step uses the exact rule: y is the projected
payoff sum_a d_a X_T^a and z = 0.  Terminal conditions are drawn uniformly
from a per-index coefficient box, so a single backward sweep learns the
solution for the whole box.
"""

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .chaos import ChaosCoefficients, estimate_coefficients
from .models import eval_generator
from .regression import (
    AdamState,
    LinearModel,
    MlpModel,
    TrainingBatch,
    adam_step,
    init_mlp,
    linear_fit,
    load_model,
    loss_and_gradient,
    mlp_forward,
    save_model,
    set_normalization,
)
from .simulation import TimeGrid, forward_states, rng_stream, sample_paths, union_grid


@dataclass(frozen=True)
class CoefficientBox:
    """Per-index coefficient intervals [lo_a, hi_a] defining the training set."""

    index_set: object
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if lo.shape != (len(self.index_set),) or hi.shape != lo.shape:
            raise ValueError("box bounds must have one interval per index")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("box bounds must be finite")
        if np.any(lo > hi):
            raise ValueError("box intervals must satisfy lo <= hi")


def degenerate_box(coefficients):
    """Single-point box pinned at one terminal condition's coefficients."""
    return CoefficientBox(
        index_set=coefficients.index_set, lo=coefficients.values, hi=coefficients.values
    )


def box_from_family(terminals, index_set, basis, n_samples, rng_seed, correlation=None):
    """Envelope of estimated coefficients over a family of terminal conditions.

    The same seed is reused for every member (common random numbers), so the
    envelope of a parametric family is monotone in the family parameter
    wherever the coefficients are.
    """
    terminals = list(terminals)
    if not terminals:
        raise ValueError("family must contain at least one terminal condition")
    lo = np.full(len(index_set), np.inf)
    hi = np.full(len(index_set), -np.inf)
    for terminal in terminals:
        est = estimate_coefficients(
            terminal, index_set, basis, n_samples, rng_seed, correlation=correlation
        )
        lo = np.minimum(lo, est.values)
        hi = np.maximum(hi, est.values)
    return CoefficientBox(index_set=index_set, lo=lo, hi=hi)


def sample_coefficient_matrix(box, rng, n):
    """n independent coefficient vectors, each entry uniform on its interval."""
    u = rng.uniform(size=(n, len(box.index_set)))
    return box.lo[None, :] + u * (box.hi - box.lo)[None, :]


def sample_coefficients(box, rng, basis=None):
    values = sample_coefficient_matrix(box, rng, 1)[0]
    return ChaosCoefficients(index_set=box.index_set, basis=basis, values=values)


@dataclass
class TrainConfig:
    kind: str = "mlp"  # "mlp" or "linear"
    batch_size: int = 50_000
    adam_steps: int = 3_000
    lr: float = 1e-3
    hidden_mult: int = 3
    picard_tol: float = 1e-12
    picard_max_iter: int = 50
    explicit: bool = False
    warm_start: bool = True
    cold_steps: int = None  # Adam budget for cold-started steps; defaults to adam_steps
    avg_tail: int = 0  # average parameters over the last k Adam iterates
    log_every: int = 0  # 0 disables loss logging


@dataclass
class OperatorSolution:
    grid: TimeGrid
    index_set: object
    basis: object
    gen: object
    kind: str
    models: list  # one per interior step; entry n is None (terminal rule)
    correlation: np.ndarray
    sim_grid: TimeGrid = None
    train_losses: list = field(default_factory=list)

    @property
    def n_steps(self):
        return self.grid.n_steps


def index_set_hash(index_set):
    payload = json.dumps([index_set.p, index_set.m_d]).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


def initial_state_values(index_set, basis):
    """Deterministic chaos state at t = 0 (the H_n(0) pattern)."""
    from .chaos import monomial_matrix

    return monomial_matrix(index_set, np.zeros((1, basis.m_d)))[0]


def _check_mesh(grid, gen):
    if gen.lip > 0.0 and grid.mesh >= 1.0 / gen.lip:
        raise ValueError(
            f"mesh {grid.mesh} violates the well-definedness bound "
            f"1/[g]_L = {1.0 / gen.lip}"
        )


def _features(states, coeff_matrix):
    return np.concatenate([states, coeff_matrix], axis=1)


def train_operator(grid, index_set, basis, gen, box, config, rng_seed, correlation=None):
    """Backward sweep of the joint one-step regressions over P (x) uniform(box).

    Deterministic given ``rng_seed`` and the budgets in ``config``.
    """
    _check_mesh(grid, gen)
    d = basis.d
    if correlation is None:
        correlation = np.eye(d)
    sim_grid = union_grid(grid, TimeGrid(basis.times))
    n = grid.n_steps
    pi_pos = np.searchsorted(sim_grid.points, grid.points)
    models = [None] * (n + 1)
    sol = OperatorSolution(
        grid=grid,
        index_set=index_set,
        basis=basis,
        gen=gen,
        kind=config.kind,
        models=models,
        correlation=np.asarray(correlation, dtype=float),
        sim_grid=sim_grid,
    )

    def draw(rng, size):
        values = sample_paths(sim_grid, d, correlation, size, rng)
        coeffs = sample_coefficient_matrix(box, rng, size)
        return values, coeffs

    def y_next_of(i, values, coeffs):
        t_next = grid.points[i + 1]
        states = forward_states(values, sim_grid, basis, index_set, t_next)
        if i + 1 == n:
            return np.einsum("na,na->n", states, coeffs)
        y, _ = _predict(models[i + 1], _features(states, coeffs))
        return y

    for i in range(n - 1, -1, -1):
        t_i = grid.points[i]
        dt = grid.points[i + 1] - grid.points[i]
        stream = rng_stream(rng_seed, 1000 + i)
        if config.kind == "linear":
            models[i] = _train_linear_step(
                i, t_i, dt, gen, config, draw, y_next_of,
                lambda values: forward_states(values, sim_grid, basis, index_set, t_i),
                pi_pos, stream,
            )
        elif config.kind == "mlp":
            models[i], losses = _train_mlp_step(
                i, t_i, dt, gen, config, draw, y_next_of,
                lambda values: forward_states(values, sim_grid, basis, index_set, t_i),
                pi_pos, stream,
                warm_from=models[i + 1] if (config.warm_start and i + 1 < n) else None,
                d=d,
                n_features=2 * len(index_set),
            )
            sol.train_losses.append((i, losses))
        else:
            raise ValueError(f"unknown regressor kind {config.kind!r}")
    return sol


def _predict(model, features):
    if isinstance(model, MlpModel):
        return mlp_forward(model, features)
    return model.predict(features)


def _train_linear_step(i, t_i, dt, gen, config, draw, y_next_of, states_of, pi_pos, rng):
    values, coeffs = draw(rng, config.batch_size)
    states = states_of(values)
    features = _features(states, coeffs)
    y_next = y_next_of(i, values, coeffs)
    db = values[:, pi_pos[i + 1], :] - values[:, pi_pos[i], :]

    z_targets = y_next[:, None] * db / dt
    z_model = linear_fit(features, z_targets)
    design = np.concatenate([np.ones((features.shape[0], 1)), features], axis=1)
    z_hat = design @ z_model.weights

    # Implicit step solved by Picard iteration; contraction since dt * [g]_L < 1.
    y_model = linear_fit(features, y_next)
    y_hat = y_model.predict(features)[0]
    if gen.family != "zero":
        for _ in range(config.picard_max_iter):
            y_arg = y_next if config.explicit else y_hat
            target = y_next + dt * eval_generator(gen, t_i, y_arg, z_hat)
            y_model = linear_fit(features, target)
            y_new = y_model.predict(features)[0]
            delta = float(np.max(np.abs(y_new - y_hat)))
            y_hat = y_new
            if delta < config.picard_tol or config.explicit:
                break
    weights = np.concatenate([y_model.weights[:, :1], z_model.weights], axis=1)
    return LinearModel(weights=weights)


def _train_mlp_step(
    i, t_i, dt, gen, config, draw, y_next_of, states_of, pi_pos, rng,
    warm_from, d, n_features,
):
    hidden = config.hidden_mult * (n_features // 2)
    if warm_from is not None:
        model = warm_from.copy()
    else:
        model = init_mlp(n_features, hidden, d, rng)
    if warm_from is None or model.feat_shift is None:
        # Re-standardizing a warm-started model would silently distort the
        # copied function, so normalization is only fitted on a cold start.
        pilot_values, pilot_coeffs = draw(rng, min(config.batch_size, 10_000))
        pilot_features = _features(states_of(pilot_values), pilot_coeffs)
        set_normalization(model, pilot_features)
    state = AdamState.for_model(model, lr=config.lr)
    n_adam = config.adam_steps
    if warm_from is None and config.cold_steps is not None:
        # the first (cold-started) step has no warm start to lean on, and its
        # bias feeds every later regression target
        n_adam = config.cold_steps
    losses = []
    avg = None
    avg_from = n_adam - min(config.avg_tail, n_adam)
    for step in range(n_adam):
        values, coeffs = draw(rng, config.batch_size)
        features = _features(states_of(values), coeffs)
        y_next = y_next_of(i, values, coeffs)
        db = values[:, pi_pos[i + 1], :] - values[:, pi_pos[i], :]
        batch = TrainingBatch(features=features, y_next=y_next, db=db, dt=dt, t=t_i)
        try:
            loss, grads = loss_and_gradient(model, batch, gen, explicit=config.explicit)
        except FloatingPointError as exc:
            raise FloatingPointError(f"training diverged at time step {i}: {exc}") from exc
        adam_step(model, state, grads)
        if config.avg_tail and step >= avg_from:
            if avg is None:
                avg = [p.copy() for p in model.parameters()]
            else:
                for a, p in zip(avg, model.parameters()):
                    a += p
        if config.log_every and step % config.log_every == 0:
            losses.append(loss)
    if avg is not None:
        # Tail averaging integrates out the stationary minibatch noise of
        # constant-rate Adam, whose scale (~target std / sqrt(batch)) is
        # otherwise the accuracy floor of the trained map.
        for a, p in zip(avg, model.parameters()):
            p[...] = a / min(config.avg_tail, n_adam)
    return model, losses


def evaluate_operator(sol, i, state_values, coeff_values):
    """(y, z) of the trained operator at step i; batched over rows."""
    states = np.atleast_2d(np.asarray(state_values, dtype=float))
    coeffs = np.atleast_2d(np.asarray(coeff_values, dtype=float))
    if coeffs.shape[0] == 1 and states.shape[0] > 1:
        coeffs = np.broadcast_to(coeffs, (states.shape[0], coeffs.shape[1]))
    if states.shape[1] != len(sol.index_set) or coeffs.shape[1] != len(sol.index_set):
        raise ValueError("state/coefficient width does not match the solution's index set")
    if i == sol.n_steps:
        y = np.einsum("na,na->n", states, coeffs)
        return y, np.zeros((states.shape[0], sol.basis.d))
    return _predict(sol.models[i], _features(states, coeffs))


def operator_y0_z0(sol, coeff_values):
    """Operator output at t = 0, where the chaos state is deterministic."""
    x0 = initial_state_values(sol.index_set, sol.basis)
    y, z = evaluate_operator(sol, 0, x0[None, :], np.atleast_2d(coeff_values))
    return float(y[0]), z[0]


@dataclass
class OperatorErrorReport:
    y_sq_error: float  # max_i E |Y_i^op - Y_i^ref|^2
    y_sq_stderr: float
    z_sq_error: float  # sum_i dt_i E |Z_i^op - Z_i^ref|^2
    z_sq_stderr: float
    per_step_y: np.ndarray
    per_step_y_stderr: np.ndarray
    coefficient_source: str = "supplied"
    projection_sq_error: float = np.nan


def estimate_operator_error(
    sol, terminal, reference, n_paths, rng_seed, coefficients=None, coeff_samples=None
):
    """Monte Carlo estimate of the scheme error against a per-xi reference.

    The supremum over t is replaced by the max over the solution grid and
    the true solution by ``reference`` (a FixedSolution or another
    OperatorSolution on the same or a finer grid).
    """
    from .models import terminal_grid

    coeff_source = "supplied"
    if coefficients is None:
        coeff_source = "estimated"
        coefficients = estimate_coefficients(
            terminal, sol.index_set, sol.basis,
            coeff_samples or n_paths, rng_seed + 1,
            correlation=sol.correlation,
        )
    ref_grid = reference.grid
    for t in sol.grid.points:
        if not np.any(np.isclose(ref_grid.points, t)):
            raise ValueError("reference grid must contain every solution grid point")
    grids = [sol.sim_grid or sol.grid, ref_grid, TimeGrid(sol.basis.times)]
    if getattr(reference, "sim_grid", None) is not None:
        grids.append(reference.sim_grid)
    grids.append(terminal_grid(terminal, sol.basis))
    sim_grid = union_grid(*grids)
    rng = rng_stream(rng_seed, 7)
    values = sample_paths(sim_grid, sol.basis.d, sol.correlation, n_paths, rng)

    n = sol.n_steps
    per_y = np.zeros(n)
    per_y_se = np.zeros(n)
    z_terms = np.zeros(n)
    z_se = np.zeros(n)
    coeff_row = coefficients.values[None, :]
    for i in range(n):
        t = sol.grid.points[i]
        states = forward_states(values, sim_grid, sol.basis, sol.index_set, t)
        y_op, z_op = evaluate_operator(sol, i, states, coeff_row)
        y_ref, z_ref = _reference_eval(reference, t, values, sim_grid, coefficients)
        dy2 = (y_op - y_ref) ** 2
        dz2 = np.sum((z_op - z_ref) ** 2, axis=1)
        per_y[i] = dy2.mean()
        per_y_se[i] = dy2.std(ddof=1) / np.sqrt(n_paths)
        dt = sol.grid.points[i + 1] - sol.grid.points[i]
        z_terms[i] = dt * dz2.mean()
        z_se[i] = dt * dz2.std(ddof=1) / np.sqrt(n_paths)
    i_max = int(np.argmax(per_y))
    return OperatorErrorReport(
        y_sq_error=float(per_y[i_max]),
        y_sq_stderr=float(per_y_se[i_max]),
        z_sq_error=float(z_terms.sum()),
        z_sq_stderr=float(np.sqrt(np.sum(z_se**2))),
        per_step_y=per_y,
        per_step_y_stderr=per_y_se,
        coefficient_source=coeff_source,
    )


def _reference_eval(reference, t, values, sim_grid, coefficients):
    i_ref = int(np.argmin(np.abs(reference.grid.points - t)))
    states = forward_states(
        values, sim_grid, reference.basis, reference.index_set, t
    )
    if isinstance(reference, OperatorSolution):
        return evaluate_operator(reference, i_ref, states, coefficients.values[None, :])
    return reference.evaluate(i_ref, states)


def save_operator(sol, directory, seeds=None, budgets=None):
    """Persist a trained operator as a directory: manifest plus one model per step."""
    os.makedirs(directory, exist_ok=True)
    manifest = {
        "grid": [float(t) for t in sol.grid.points],
        "basis_partition": [float(t) for t in sol.basis.times],
        "d": sol.basis.d,
        "p": sol.index_set.p,
        "index_set_hash": index_set_hash(sol.index_set),
        "generator": sol.gen.family,
        "kind": sol.kind,
        "correlation": np.asarray(sol.correlation).tolist(),
        "seeds": seeds or {},
        "budgets": budgets or {},
    }
    with open(os.path.join(directory, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    for i, model in enumerate(sol.models):
        if model is not None:
            save_model(
                model,
                os.path.join(directory, f"step_{i:03d}.model"),
                index_set_hash=manifest["index_set_hash"],
            )


def load_operator(directory, gen):
    from .basis import BasisSpec
    from .indices import enumerate_index_set

    with open(os.path.join(directory, "manifest.json")) as f:
        manifest = json.load(f)
    basis = BasisSpec(times=np.array(manifest["basis_partition"]), d=manifest["d"])
    index_set = enumerate_index_set(manifest["p"], basis.m_d)
    grid = TimeGrid(np.array(manifest["grid"]))
    models = [None] * (grid.n_steps + 1)
    for i in range(grid.n_steps):
        path = os.path.join(directory, f"step_{i:03d}.model")
        if os.path.exists(path):
            models[i] = load_model(path)
    return OperatorSolution(
        grid=grid,
        index_set=index_set,
        basis=basis,
        gen=gen,
        kind=manifest["kind"],
        models=models,
        correlation=np.array(manifest["correlation"]),
        sim_grid=union_grid(grid, TimeGrid(basis.times)),
    )
