import numpy as np
import pytest
from scipy import stats

from chaosbsde.basis import BasisSpec
from chaosbsde.models import (
    asian_basket_terminal,
    asset_paths,
    barrier_call_terminal,
    borrowing_rate_generator,
    eval_generator,
    eval_terminal,
    eval_terminals,
    generator_gradient,
    linear_rate_generator,
    power_max_terminal,
    trig_generator,
    zero_generator,
)
from chaosbsde.simulation import BrownianPath, TimeGrid, rng_stream, sample_paths

ALL_GENS = [
    zero_generator(),
    linear_rate_generator(0.05, [0.2]),
    trig_generator(),
    borrowing_rate_generator(0.02, 0.1, [0.05, 0.05], [0.2, 0.2], 0.1),
]


def test_generator_values():
    y = np.array([0.3, -1.2])
    z = np.array([[0.1], [0.4]])
    g = linear_rate_generator(0.05, [0.2])
    np.testing.assert_allclose(eval_generator(g, 0.0, y, z), -0.05 * y - 0.2 * z[:, 0])
    t = trig_generator()
    np.testing.assert_allclose(eval_generator(t, 0.0, y, z), np.cos(y) + np.sin(z[:, 0]))
    assert eval_generator(zero_generator(), 0.0, 1.0, np.zeros(1)) == 0.0


def test_borrowing_rate_reduces_to_linear_when_positive():
    # When y - sum(Sigma^-1 z) >= 0 the nonlinear term is off.
    gen = borrowing_rate_generator(0.02, 0.1, [0.05, 0.05], [0.2, 0.2], 0.1)
    y = np.array([5.0])
    z = np.array([[0.01, 0.01]])
    want = -gen.r * y - z @ gen.theta
    np.testing.assert_allclose(eval_generator(gen, 0.0, y, z), want)
    # deep negative w turns the penalty on
    y2 = np.array([-5.0])
    got = eval_generator(gen, 0.0, y2, z)
    assert got[0] > (-gen.r * y2 - z @ gen.theta)[0]


@pytest.mark.parametrize("gen", ALL_GENS, ids=lambda g: g.family)
def test_generator_gradient_finite_differences(gen):
    rng = rng_stream(77)
    d = 1 if gen.sigma_mat is None else gen.sigma_mat.shape[0]
    y = rng.standard_normal(20)
    z = rng.standard_normal((20, d))
    gy, gz = generator_gradient(gen, 0.0, y, z)
    h = 1e-6
    fy = (eval_generator(gen, 0.0, y + h, z) - eval_generator(gen, 0.0, y - h, z)) / (2 * h)
    np.testing.assert_allclose(gy, fy, atol=1e-6)
    for j in range(d):
        dz = np.zeros_like(z)
        dz[:, j] = h
        fz = (eval_generator(gen, 0.0, y, z + dz) - eval_generator(gen, 0.0, y, z - dz)) / (2 * h)
        np.testing.assert_allclose(gz[:, j], fz, atol=1e-6)


def test_lipschitz_bound_holds_empirically():
    rng = rng_stream(3)
    for gen in ALL_GENS:
        d = 1 if gen.sigma_mat is None else gen.sigma_mat.shape[0]
        y1, y2 = rng.standard_normal((2, 500)) * 3
        z1, z2 = rng.standard_normal((2, 500, d)) * 3
        g1 = eval_generator(gen, 0.0, y1, z1)
        g2 = eval_generator(gen, 0.0, y2, z2)
        dist = np.abs(y1 - y2) + np.linalg.norm(z1 - z2, axis=1)
        mask = dist > 1e-12
        assert np.all(np.abs(g1 - g2)[mask] <= gen.lip * dist[mask] * (1 + 1e-10))


def test_power_max_payoff_hand_case():
    # Two steps, dt = 0.5 each; path B = (0, 1, -2).
    times = np.array([0.0, 0.5, 1.0])
    term = power_max_terminal(2.0, times)
    values = np.array([[0.0], [1.0], [-2.0]])
    path = BrownianPath(grid=TimeGrid(times), values=values, correlation=np.eye(1))
    # sum: 0.5 * |1|^2 + 0.5 * |-2|^2 = 2.5; max(B_{0.5}, B_1) = 1; P * max = 2
    assert eval_terminal(term, path) == pytest.approx(0.5)


def test_power_zero_convention():
    # |0|^0 := 1, so P = 0 gives xi = sum dt_i = T exactly.
    times = np.linspace(0, 1, 6)
    term = power_max_terminal(0.0, times)
    values = np.zeros((6, 1))
    path = BrownianPath(grid=TimeGrid(times), values=values, correlation=np.eye(1))
    assert eval_terminal(term, path) == pytest.approx(1.0)


def test_gbm_transform_exact():
    grid = TimeGrid(np.array([0.0, 0.5, 1.0]))
    values = np.array([[[0.0], [0.3], [-0.1]]])
    s = asset_paths(values, grid, [2.0], [0.05], [0.2])
    want = 2.0 * np.exp((0.05 - 0.5 * 0.04) * grid.points + 0.2 * values[0, :, 0])
    np.testing.assert_allclose(s[0, :, 0], want)


def test_barrier_call_payoff():
    times = np.linspace(0, 1, 3)
    term = barrier_call_terminal(1.0, 0.85, [1.0], [0.0], [0.2], times)
    grid = TimeGrid(times)
    # crafted Brownian values: one path alive and in the money, one knocked out
    values = np.array(
        [[[0.0], [0.5], [1.0]],
         [[0.0], [-2.0], [1.0]]]
    )
    basis = BasisSpec(times=times, d=1)
    pay = eval_terminals(term, values, grid, basis)
    s = asset_paths(values, grid, [1.0], [0.0], [0.2])[:, :, 0]
    assert pay[0] == pytest.approx(max(s[0, -1] - 1.0, 0.0))
    assert pay[1] == 0.0  # S at t=0.5 is ~0.74 < 0.85: knocked out


def test_barrier_monotone_in_barrier():
    # Raising the barrier can only knock out more paths: payoff non-increasing.
    times = np.linspace(0, 1, 11)
    grid = TimeGrid(times)
    basis = BasisSpec(times=times, d=1)
    values = sample_paths(grid, 1, np.eye(1), 2_000, rng_stream(6))
    pays = []
    for barrier in (0.80, 0.85, 0.90):
        term = barrier_call_terminal(1.0, barrier, [1.0], [0.05], [0.2], times)
        pays.append(eval_terminals(term, values, grid, basis))
    assert np.all(pays[0] >= pays[1]) and np.all(pays[1] >= pays[2])


def test_asian_basket_hand_case():
    times = np.array([0.0, 0.5, 1.0])
    grid = TimeGrid(times)
    basis = BasisSpec(times=times, d=2)
    term = asian_basket_terminal(0.5, [1.0, 1.0], [0.0, 0.0], [0.0, 0.0], times)
    # zero vol, zero drift: S = 1 everywhere; average = (1/2)(sum_j sum_i dt_i * 1) = 1
    values = np.zeros((1, 3, 2))
    pay = eval_terminals(term, values, grid, basis)
    assert pay[0] == pytest.approx(0.5)


def test_vanilla_call_price_matches_black_scholes():
    # Barrier far below any path: the payoff is a European call; the
    # discounted risk-neutral mean must match the closed form.
    times = np.linspace(0, 1, 11)
    grid = TimeGrid(times)
    basis = BasisSpec(times=times, d=1)
    r, sigma, s0, k = 0.01, 0.2, 1.0, 1.0
    term = barrier_call_terminal(k, 1e-8, [s0], [r], [sigma], times)
    values = sample_paths(grid, 1, np.eye(1), 400_000, rng_stream(15))
    pay = eval_terminals(term, values, grid, basis)
    price = np.exp(-r) * pay.mean()
    se = np.exp(-r) * pay.std(ddof=1) / np.sqrt(len(pay))
    d1 = (np.log(s0 / k) + (r + 0.5 * sigma**2)) / sigma
    bs = s0 * stats.norm.cdf(d1) - k * np.exp(-r) * stats.norm.cdf(d1 - sigma)
    assert abs(price - bs) < 4 * se
