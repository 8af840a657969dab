"""Chaos monomials, coefficient estimation and the finite projection.

A square-integrable horizon functional xi decomposes over products of
Hermite polynomials of the basis integrals G_i = int_0^T h_i . dB.  The
truncated representation keeps indices with degree <= p over the first
M_d basis elements; its coefficients are d_a = a! E[xi * X_T^a], estimated
here by plain Monte Carlo with reported standard errors.
"""

import io
from dataclasses import dataclass

import numpy as np

from .basis import basis_gaussians
from .hermite import hermite_eval, hermite_eval_all

SERIALIZATION_VERSION = 1


def monomial_matrix(index_set, gaussians):
    """X^a = prod_i H_{a_i}(G_i) for every index, shape (n_paths, |A|).

    One Hermite recurrence per basis element; products are then gathered
    per index, in ascending basis order (bitwise identical to the naive
    per-index evaluation).
    """
    g = np.atleast_2d(np.asarray(gaussians, dtype=float))
    herm = hermite_eval_all(index_set.p, g)  # (n_paths, m_d, p+1)
    n_paths = g.shape[0]
    out = np.empty((n_paths, len(index_set)))
    for col, a in enumerate(index_set.indices):
        acc = None
        for i, n in enumerate(a):
            if n == 0:
                continue
            factor = herm[:, i, n]
            acc = factor.copy() if acc is None else acc * factor
        out[:, col] = 1.0 if acc is None else acc
    return out


def chaos_monomial(a, path, basis, t):
    """X_t^a for a single path: the product of H_{a_i} over basis integrals."""
    from .basis import basis_integral

    value = 1.0
    for k, n in enumerate(a):
        if n == 0:
            continue
        i, j = basis.element(k)
        value *= hermite_eval(n, basis_integral(path, basis, i, j, t))
    return value


@dataclass(frozen=True)
class ChaosCoefficients:
    index_set: object
    basis: object
    values: np.ndarray  # d_a per index
    stderrs: np.ndarray = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.shape != (len(self.index_set),):
            raise ValueError("one coefficient per index required")
        if not np.all(np.isfinite(v)):
            raise ValueError("coefficients must be finite")
        if self.stderrs is not None:
            s = np.asarray(self.stderrs, dtype=float)
            object.__setattr__(self, "stderrs", s)


def estimate_coefficients(
    terminal,
    index_set,
    basis,
    n_samples,
    rng_seed,
    correlation=None,
    antithetic=False,
    block_size=100_000,
    n_streams=1,
):
    """Monte Carlo estimate of d_a = a! E[xi * X_T^a] with standard errors.

    Samples are partitioned over ``n_streams`` deterministic substreams of
    ``rng_seed``; the result does not depend on how a fixed partition is
    executed.  ``antithetic`` pairs each path with its sign-flipped twin.
    """
    from .models import eval_terminals, terminal_grid
    from .simulation import rng_stream, sample_paths, union_grid

    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    d = basis.d
    if correlation is None:
        correlation = np.eye(d)
    grid = union_grid(terminal_grid(terminal, basis), _basis_grid(basis))
    fact = index_set.factorials()
    n_idx = len(index_set)

    total = 0
    s1 = np.zeros(n_idx)
    s2 = np.zeros(n_idx)
    per_stream = _split_evenly(n_samples, n_streams)
    for stream, n_stream in enumerate(per_stream):
        rng = rng_stream(rng_seed, stream)
        done = 0
        while done < n_stream:
            n_block = min(block_size, n_stream - done)
            values = sample_paths(grid, d, correlation, n_block, rng)
            batches = [values, -values] if antithetic else [values]
            for vals in batches:
                xi = eval_terminals(terminal, vals, grid, basis)
                if not np.all(np.isfinite(xi)):
                    raise FloatingPointError("terminal payoff produced a non-finite sample")
                g = basis_gaussians(vals, grid.points, basis, basis.horizon)
                mono = monomial_matrix(index_set, g)
                prod = mono * xi[:, None]
                s1 += prod.sum(axis=0)
                s2 += (prod * prod).sum(axis=0)
                total += n_block
            done += n_block
    mean = s1 / total
    var = np.maximum(s2 / total - mean**2, 0.0)
    stderr = np.sqrt(var / total)
    return ChaosCoefficients(
        index_set=index_set,
        basis=basis,
        values=fact * mean,
        stderrs=fact * stderr,
    )


def project(coefficients, path):
    """Pi_{p,M}(xi)(omega) = sum_a d_a X_T^a evaluated on one path."""
    g = basis_gaussians(
        path.values[None, :, :], path.grid.points, coefficients.basis, coefficients.basis.horizon
    )
    mono = monomial_matrix(coefficients.index_set, g)
    return float(mono[0] @ coefficients.values)


def project_batch(coefficients_matrix, monomials):
    """Row-wise projection: one coefficient vector and one monomial row per sample."""
    return np.einsum("na,na->n", monomials, coefficients_matrix)


def _basis_grid(basis):
    from .simulation import TimeGrid

    return TimeGrid(basis.times)


def _split_evenly(n, parts):
    base, extra = divmod(n, parts)
    return [base + (1 if k < extra else 0) for k in range(parts)]


def save_coefficients(coefficients, path_or_file):
    """Versioned text serialization; round-trips bit-exactly via 17 significant digits."""
    basis = coefficients.basis
    buf = io.StringIO()
    buf.write(f"chaos-coefficients v{SERIALIZATION_VERSION}\n")
    buf.write(f"p {coefficients.index_set.p}\n")
    buf.write(f"M {basis.n_subintervals}\n")
    buf.write(f"d {basis.d}\n")
    buf.write("partition " + " ".join(f"{t:.17g}" for t in basis.times) + "\n")
    stderrs = coefficients.stderrs
    if stderrs is None:
        stderrs = np.full(len(coefficients.values), np.nan)
    for a, v, s in zip(coefficients.index_set.indices, coefficients.values, stderrs):
        buf.write(",".join(str(x) for x in a) + f",{v:.17g},{s:.17g}\n")
    text = buf.getvalue()
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        with open(path_or_file, "w") as f:
            f.write(text)


def load_coefficients(path_or_file):
    from .basis import BasisSpec
    from .indices import enumerate_index_set

    if hasattr(path_or_file, "read"):
        lines = path_or_file.read().splitlines()
    else:
        with open(path_or_file) as f:
            lines = f.read().splitlines()
    header = lines[0].split()
    if header[0] != "chaos-coefficients" or header[1] != f"v{SERIALIZATION_VERSION}":
        raise ValueError("unrecognized coefficient file header")
    p = int(lines[1].split()[1])
    m = int(lines[2].split()[1])
    d = int(lines[3].split()[1])
    times = np.array([float(x) for x in lines[4].split()[1:]])
    if len(times) != m + 1:
        raise ValueError("partition length inconsistent with M")
    basis = BasisSpec(times=times, d=d)
    index_set = enumerate_index_set(p, basis.m_d)
    values = np.empty(len(index_set))
    stderrs = np.empty(len(index_set))
    for line in lines[5:]:
        parts = line.split(",")
        a = tuple(int(x) for x in parts[: basis.m_d])
        pos = index_set.position(a)
        if pos < 0:
            raise ValueError(f"index {a} not in the declared family")
        values[pos] = float(parts[basis.m_d])
        stderrs[pos] = float(parts[basis.m_d + 1])
    return ChaosCoefficients(index_set=index_set, basis=basis, values=values, stderrs=stderrs)
