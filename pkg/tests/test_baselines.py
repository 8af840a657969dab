import numpy as np
import pytest
from scipy import stats

from chaosbsde.baselines import (
    backward_euler_fixed,
    mc_delta,
    mc_price,
    nested_ce_oracle,
)
from chaosbsde.basis import BasisSpec
from chaosbsde.chaos import ChaosCoefficients
from chaosbsde.indices import enumerate_index_set
from chaosbsde.models import (
    barrier_call_terminal,
    chaos_synthetic_terminal,
    linear_rate_generator,
    zero_generator,
)
from chaosbsde.simulation import uniform_grid


def setup(m=5, p=2):
    basis = BasisSpec(times=np.linspace(0, 1, m + 1), d=1)
    return basis, enumerate_index_set(p, basis.m_d)


def brownian_coeffs(basis, iset):
    vals = np.zeros(len(iset))
    dts = basis.subinterval_lengths()
    for k in range(basis.m_d):
        a = tuple(1 if j == k else 0 for j in range(basis.m_d))
        vals[iset.position(a)] = np.sqrt(dts[k])
    return ChaosCoefficients(index_set=iset, basis=basis, values=vals)


def bs_call(s0, k, r, sigma, t):
    d1 = (np.log(s0 / k) + (r + 0.5 * sigma**2) * t) / (sigma * np.sqrt(t))
    d2 = d1 - sigma * np.sqrt(t)
    return s0 * stats.norm.cdf(d1) - k * np.exp(-r * t) * stats.norm.cdf(d2)


def test_backward_euler_martingale_case():
    basis, iset = setup()
    term = chaos_synthetic_terminal(brownian_coeffs(basis, iset))
    sol = backward_euler_fixed(term, uniform_grid(1.0, 5), iset, basis,
                               zero_generator(), 50_000, 3)
    assert abs(sol.y0) <= 4 * sol.y0_stderr + 1e-12
    assert abs(sol.z0[0] - 1.0) <= 4 * sol.z0_stderr[0] + 0.01
    assert sol.y0_stderr > 0 and sol.z0_stderr[0] > 0


def test_backward_euler_discount_recursion():
    # g = -r y with xi = 1: the implicit recursion gives (1 + r dt)^(-n).
    basis, iset = setup()
    coeffs = ChaosCoefficients(
        index_set=iset, basis=basis,
        values=np.eye(len(iset))[0],  # d_0 = 1, constant payoff
    )
    term = chaos_synthetic_terminal(coeffs)
    r, n = 0.1, 5
    gen = linear_rate_generator(r, [0.0])
    sol = backward_euler_fixed(term, uniform_grid(1.0, n), iset, basis, gen, 2_000, 3)
    assert sol.y0 == pytest.approx((1 + r / n) ** (-n), abs=1e-10)


def test_mc_price_matches_black_scholes():
    basis, _ = setup(m=10)
    r, sigma, s0, k = 0.01, 0.2, 1.0, 1.0
    # negligible barrier -> vanilla call; mu deliberately not r to check the
    # pricing-measure override
    term = barrier_call_terminal(k, 1e-8, [s0], [0.05], [sigma], basis.times)
    est = mc_price(term, basis, 400_000, 5, r)
    want = bs_call(s0, k, r, sigma, 1.0)
    assert abs(est.value - want) <= 4 * est.stderr
    est2 = mc_price(term, basis, 400_000, 5, r, antithetic=True)
    assert abs(est2.value - want) <= 4 * est.stderr


def test_mc_delta_matches_black_scholes():
    basis, _ = setup(m=10)
    r, sigma, s0, k = 0.01, 0.2, 1.0, 1.0
    term = barrier_call_terminal(k, 1e-8, [s0], [0.05], [sigma], basis.times)
    z0, z0_se = mc_delta(term, basis, 400_000, 5, r)
    d1 = (np.log(s0 / k) + (r + 0.5 * sigma**2)) / sigma
    want = stats.norm.cdf(d1) * sigma * s0  # Z_0 = delta * sigma * s_0
    assert abs(z0[0] - want) <= 4 * z0_se[0] + 0.01 * want


def test_nested_oracle_discount_recursion():
    basis, iset = setup(m=2)
    coeffs = ChaosCoefficients(index_set=iset, basis=basis, values=np.eye(len(iset))[0])
    term = chaos_synthetic_terminal(coeffs)
    r, n = 0.1, 2
    gen = linear_rate_generator(r, [0.0])
    y0, z0 = nested_ce_oracle(term, uniform_grid(1.0, n), basis, gen, 2_000, 200, 7)
    assert y0 == pytest.approx((1 + r / n) ** (-n), abs=1e-6)
    # Z_0 = 0 up to outer MC noise ~ std(Y_1 dB)/ (dt sqrt(n_outer)) ~ 0.03
    assert z0[0] == pytest.approx(0.0, abs=0.12)


def test_nested_oracle_refuses_large_problems():
    basis, iset = setup(m=2)
    term = chaos_synthetic_terminal(brownian_coeffs(basis, iset))
    with pytest.raises(ValueError):
        nested_ce_oracle(term, uniform_grid(1.0, 5), basis, zero_generator(), 10, 10, 1)
