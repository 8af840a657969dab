"""Chaos coefficients of a path-dependent payoff.

Estimates the truncated chaos expansion of the payoff
xi(P) = sum_i dt_i |B_{t_{i+1}}|^P - P max_i B_{t_i}
and checks how well the finite projection reproduces the payoff in L^2.
"""

import numpy as np

from chaosbsde import (
    BasisSpec,
    TimeGrid,
    enumerate_index_set,
    estimate_coefficients,
    monomial_matrix,
    power_max_terminal,
    sample_paths,
    rng_stream,
)
from chaosbsde.basis import basis_gaussians
from chaosbsde.models import eval_terminals

times = np.linspace(0.0, 1.0, 11)
basis = BasisSpec(times=times, d=1)
term = power_max_terminal(1.0, times)

print("truncation degree p | #indices | projection RMS error")
grid = TimeGrid(times)
values = sample_paths(grid, 1, np.eye(1), 100_000, rng_stream(123))
xi = eval_terminals(term, values, grid, basis)
g = basis_gaussians(values, grid.points, basis, 1.0)

for p in (0, 1, 2, 3):
    iset = enumerate_index_set(p, basis.m_d)
    est = estimate_coefficients(term, iset, basis, 200_000, 7)
    proj = monomial_matrix(iset, g) @ est.values
    rms = np.sqrt(np.mean((proj - xi) ** 2))
    print(f"{p:19d} | {len(iset):8d} | {rms:.4f}")

print()
print("largest coefficients at p = 2:")
iset = enumerate_index_set(2, basis.m_d)
est = estimate_coefficients(term, iset, basis, 200_000, 7)
order = np.argsort(-np.abs(est.values))[:8]
for k in order:
    print(f"  a = {iset.indices[k]}  d_a = {est.values[k]:+.4f} +- {est.stderrs[k]:.4f}")
