import numpy as np
import pytest

from chaosbsde.basis import (
    BasisSpec,
    GridMismatchError,
    basis_gaussians,
    basis_integral,
)
from chaosbsde.simulation import BrownianPath, TimeGrid, rng_stream, sample_paths


def make_basis(m=4, d=1, horizon=1.0):
    return BasisSpec(times=np.linspace(0.0, horizon, m + 1), d=d)


def test_element_flat_ordering():
    basis = BasisSpec(times=np.linspace(0, 1, 4), d=2)
    assert basis.m_d == 6
    # k = (i-1) d + (j-1), 1-based (i, j)
    assert basis.element(0) == (1, 1)
    assert basis.element(1) == (1, 2)
    assert basis.element(2) == (2, 1)
    assert basis.element(5) == (3, 2)
    with pytest.raises(IndexError):
        basis.element(6)


def test_active_subinterval_right_continuous():
    basis = make_basis(m=4)
    assert basis.active_subinterval(0.0) == 1
    assert basis.active_subinterval(0.1) == 1
    assert basis.active_subinterval(0.25) == 2  # right-continuous at the knot
    assert basis.active_subinterval(1.0) == 4


def test_basis_integral_is_scaled_increment():
    # int_0^t h_i . dB = (B_{min(t, tbar_i)} - B_{tbar_{i-1}})_+ / sqrt(dt_i)
    grid = TimeGrid(np.linspace(0, 1, 9))
    basis = make_basis(m=4)
    values = sample_paths(grid, 1, np.eye(1), 1, rng_stream(3))[0]
    path = BrownianPath(grid=grid, values=values, correlation=np.eye(1))
    b = values[:, 0]
    dt = 0.25
    # fully covered subinterval
    got = basis_integral(path, basis, 2, 1, 1.0)
    assert got == pytest.approx((b[4] - b[2]) / np.sqrt(dt))
    # partially covered: t = 0.375 inside subinterval 2 = (0.25, 0.5]
    got = basis_integral(path, basis, 2, 1, 0.375)
    assert got == pytest.approx((b[3] - b[2]) / np.sqrt(dt))
    # not yet started
    assert basis_integral(path, basis, 3, 1, 0.375) == 0.0


def test_basis_integral_requires_grid_point():
    grid = TimeGrid(np.linspace(0, 1, 5))
    basis = make_basis(m=4)
    values = sample_paths(grid, 1, np.eye(1), 1, rng_stream(3))[0]
    path = BrownianPath(grid=grid, values=values, correlation=np.eye(1))
    with pytest.raises(GridMismatchError):
        basis_integral(path, basis, 1, 1, 0.3)


def test_basis_gaussians_batched_matches_scalar():
    grid = TimeGrid(np.linspace(0, 1, 9))
    basis = make_basis(m=4, d=2)
    values = sample_paths(grid, 2, np.eye(2), 7, rng_stream(5))
    g = basis_gaussians(values, grid.points, basis, 0.75)
    assert g.shape == (7, basis.m_d)
    path = BrownianPath(grid=grid, values=values[3], correlation=np.eye(2))
    for k in range(basis.m_d):
        i, j = basis.element(k)
        assert g[3, k] == pytest.approx(basis_integral(path, basis, i, j, 0.75))


def test_terminal_gaussians_are_standard_normal():
    # At t = T each G_k is an independent N(0, 1); check first two moments.
    grid = TimeGrid(np.linspace(0, 1, 5))
    basis = make_basis(m=4)
    values = sample_paths(grid, 1, np.eye(1), 200_000, rng_stream(11))
    g = basis_gaussians(values, grid.points, basis, 1.0)
    se = 1.0 / np.sqrt(200_000)
    assert np.all(np.abs(g.mean(axis=0)) < 5 * se)
    assert np.all(np.abs(g.var(axis=0) - 1.0) < 5 * np.sqrt(2) * se)
    cov = np.cov(g.T)
    off = cov - np.diag(np.diag(cov))
    assert np.max(np.abs(off)) < 5 * se


def test_basis_validation():
    with pytest.raises(ValueError):
        BasisSpec(times=np.array([0.0, 0.5, 0.25, 1.0]), d=1)
    with pytest.raises(ValueError):
        BasisSpec(times=np.array([0.1, 0.5, 1.0]), d=1)
    with pytest.raises(ValueError):
        BasisSpec(times=np.linspace(0, 1, 3), d=0)
