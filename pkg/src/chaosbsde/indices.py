"""Multi-index enumeration for the truncated chaos basis.

A multi-index is a tuple of M_d non-negative integers; its degree is the
entry sum.  The truncated family contains every index with degree <= p,
ordered graded-lexicographically (by degree, then lexicographic), which
gives a deterministic feature layout for regression and serialization.
"""

import math
from dataclasses import dataclass, field

import numpy as np

# Bounds the feature dimension 2*|A| handed to the regressors.
DEFAULT_CARDINALITY_CAP = 20_000


def index_degree(a):
    return sum(a)


def _compositions(total, slots):
    """All weak compositions of `total` into `slots` parts, lex order."""
    if slots == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, slots - 1):
            yield (first,) + rest


@dataclass(frozen=True)
class IndexSet:
    p: int
    m_d: int
    indices: tuple
    _position: dict = field(repr=False)

    def __len__(self):
        return len(self.indices)

    def position(self, a):
        """Ordinal of index ``a``, or -1 if it is not in the family."""
        return self._position.get(tuple(a), -1)

    def __contains__(self, a):
        return tuple(a) in self._position

    def degrees(self):
        return np.array([index_degree(a) for a in self.indices], dtype=int)

    def factorials(self):
        """a! = prod_i a_i! per index, in family order."""
        return np.array(
            [math.prod(math.factorial(k) for k in a) for a in self.indices],
            dtype=float,
        )

    def entry_matrix(self):
        """Indices stacked as an integer matrix of shape (|A|, M_d)."""
        return np.array(self.indices, dtype=int)


def enumerate_index_set(p, m_d, cardinality_cap=DEFAULT_CARDINALITY_CAP):
    """Build the family of all multi-indices with degree <= p over m_d slots.

    The cardinality is binomial(m_d + p, p); configurations above
    ``cardinality_cap`` are rejected as infeasible.
    """
    if p < 0:
        raise ValueError("p must be >= 0")
    if m_d < 1:
        raise ValueError("m_d must be >= 1")
    cardinality = math.comb(m_d + p, p)
    if cardinality > cardinality_cap:
        raise ValueError(
            f"index set would contain {cardinality} indices "
            f"(cap {cardinality_cap}); reduce p or the basis size"
        )
    indices = []
    for degree in range(p + 1):
        indices.extend(_compositions(degree, m_d))
    assert len(indices) == cardinality
    position = {a: k for k, a in enumerate(indices)}
    return IndexSet(p=p, m_d=m_d, indices=tuple(indices), _position=position)
