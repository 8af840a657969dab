import numpy as np
import pytest

from chaosbsde.basis import BasisSpec
from chaosbsde.chaos import ChaosCoefficients, estimate_coefficients
from chaosbsde.indices import enumerate_index_set
from chaosbsde.models import (
    chaos_synthetic_terminal,
    linear_rate_generator,
    power_max_terminal,
    trig_generator,
    zero_generator,
)
from chaosbsde.operator import (
    CoefficientBox,
    TrainConfig,
    box_from_family,
    degenerate_box,
    estimate_operator_error,
    evaluate_operator,
    initial_state_values,
    load_operator,
    operator_y0_z0,
    sample_coefficient_matrix,
    save_operator,
    train_operator,
)
from chaosbsde.simulation import forward_states, rng_stream, sample_paths, uniform_grid


def setup(m=5, p=2):
    basis = BasisSpec(times=np.linspace(0, 1, m + 1), d=1)
    return basis, enumerate_index_set(p, basis.m_d)


def brownian_coeffs(basis, iset):
    """d for xi = B_T: sqrt(dt) on each degree-1 index."""
    vals = np.zeros(len(iset))
    dts = basis.subinterval_lengths()
    for k in range(basis.m_d):
        a = tuple(1 if j == k else 0 for j in range(basis.m_d))
        vals[iset.position(a)] = np.sqrt(dts[k])
    return ChaosCoefficients(index_set=iset, basis=basis, values=vals)


def test_box_validation_and_sampling():
    basis, iset = setup(m=2)
    lo = -np.ones(len(iset))
    hi = np.ones(len(iset))
    box = CoefficientBox(index_set=iset, lo=lo, hi=hi)
    samples = sample_coefficient_matrix(box, rng_stream(5), 1_000)
    assert samples.shape == (1_000, len(iset))
    assert np.all(samples >= -1) and np.all(samples <= 1)
    # per-index coverage: each column spans most of its interval
    assert np.all(samples.max(axis=0) > 0.9) and np.all(samples.min(axis=0) < -0.9)
    with pytest.raises(ValueError):
        CoefficientBox(index_set=iset, lo=hi, hi=lo)


def test_box_from_family_envelopes():
    basis, iset = setup(m=2)
    terms = [power_max_terminal(p, basis.times) for p in (0.5, 1.0, 1.5)]
    box = box_from_family(terms, iset, basis, 20_000, 3)
    singles = [
        estimate_coefficients(t, iset, basis, 20_000, 3).values for t in terms
    ]
    np.testing.assert_allclose(box.lo, np.min(singles, axis=0), atol=1e-12)
    np.testing.assert_allclose(box.hi, np.max(singles, axis=0), atol=1e-12)


def test_mesh_guard():
    basis, iset = setup()
    gen = linear_rate_generator(6.0, [0.0])  # 1/[g]_L = 1/6 < mesh 0.2
    box = degenerate_box(brownian_coeffs(basis, iset))
    with pytest.raises(ValueError):
        train_operator(uniform_grid(1.0, 5), iset, basis, gen, box,
                       TrainConfig(kind="linear", batch_size=100), 1)


def test_terminal_rule():
    basis, iset = setup(m=2)
    sol_stub_grid = uniform_grid(1.0, 2)
    coeffs = brownian_coeffs(basis, iset)
    sol = train_operator(sol_stub_grid, iset, basis, zero_generator(),
                         degenerate_box(coeffs), TrainConfig(kind="linear", batch_size=2_000), 2)
    values = sample_paths(sol.sim_grid, 1, np.eye(1), 50, rng_stream(9))
    states = forward_states(values, sol.sim_grid, basis, iset, 1.0)
    y, z = evaluate_operator(sol, sol.n_steps, states, coeffs.values[None, :])
    # xi = B_T is in span: terminal evaluation reproduces it and z = 0
    np.testing.assert_allclose(y, values[:, -1, 0], atol=1e-10)
    np.testing.assert_array_equal(z, 0.0)


def test_zero_generator_martingale_case():
    # g = 0, xi = B_T: Y_i = B_{t_i}, Z_i = 1.
    basis, iset = setup(m=5)
    grid = uniform_grid(1.0, 5)
    coeffs = brownian_coeffs(basis, iset)
    sol = train_operator(grid, iset, basis, zero_generator(), degenerate_box(coeffs),
                         TrainConfig(kind="linear", batch_size=50_000), 7)
    y0, z0 = operator_y0_z0(sol, coeffs.values)
    assert abs(y0) < 0.01
    assert z0[0] == pytest.approx(1.0, abs=0.02)
    # interior step: Y should track B_t
    values = sample_paths(sol.sim_grid, 1, np.eye(1), 2_000, rng_stream(3))
    k = np.searchsorted(sol.sim_grid.points, 0.4)
    states = forward_states(values, sol.sim_grid, basis, iset, 0.4)
    y, z = evaluate_operator(sol, 2, states, coeffs.values[None, :])
    assert np.sqrt(np.mean((y - values[:, k, 0]) ** 2)) < 0.03
    assert np.mean(np.abs(z - 1.0)) < 0.05


def test_initial_state_is_hermite_at_zero():
    basis, iset = setup(m=2)
    x0 = initial_state_values(iset, basis)
    assert x0[iset.position((0, 0))] == 1.0
    assert x0[iset.position((1, 0))] == 0.0
    assert x0[iset.position((2, 0))] == pytest.approx(-0.5)


def test_error_vs_itself_is_zero():
    basis, iset = setup(m=2)
    grid = uniform_grid(1.0, 2)
    coeffs = brownian_coeffs(basis, iset)
    term = chaos_synthetic_terminal(coeffs)
    sol = train_operator(grid, iset, basis, zero_generator(), degenerate_box(coeffs),
                         TrainConfig(kind="linear", batch_size=5_000), 5)
    rep = estimate_operator_error(sol, term, sol, 2_000, 11, coefficients=coeffs)
    assert rep.y_sq_error == 0.0
    assert rep.z_sq_error == 0.0


def test_operator_save_load_roundtrip(tmp_path):
    basis, iset = setup(m=2)
    grid = uniform_grid(1.0, 2)
    gen = trig_generator()
    coeffs = brownian_coeffs(basis, iset)
    sol = train_operator(grid, iset, basis, gen, degenerate_box(coeffs),
                         TrainConfig(kind="mlp", batch_size=500, adam_steps=20), 2)
    save_operator(sol, tmp_path / "op", seeds={"train": 2})
    back = load_operator(tmp_path / "op", gen)
    x = rng_stream(1).standard_normal((5, len(iset)))
    c = coeffs.values[None, :]
    for i in range(grid.n_steps + 1):
        y1, z1 = evaluate_operator(sol, i, x, c)
        y2, z2 = evaluate_operator(back, i, x, c)
        np.testing.assert_array_equal(y1, y2)
        np.testing.assert_array_equal(z1, z2)


def test_training_deterministic_in_seed():
    basis, iset = setup(m=2)
    grid = uniform_grid(1.0, 2)
    coeffs = brownian_coeffs(basis, iset)
    a = train_operator(grid, iset, basis, zero_generator(), degenerate_box(coeffs),
                       TrainConfig(kind="linear", batch_size=2_000), 42)
    b = train_operator(grid, iset, basis, zero_generator(), degenerate_box(coeffs),
                       TrainConfig(kind="linear", batch_size=2_000), 42)
    for ma, mb in zip(a.models[:-1], b.models[:-1]):
        np.testing.assert_array_equal(ma.weights, mb.weights)
