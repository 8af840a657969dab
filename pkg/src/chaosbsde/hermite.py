"""Hermite polynomials in the normalization H_n = He_n / n!.

He_n is the probabilists' Hermite polynomial.  In this normalization
H_0 = 1, H_1(x) = x, H_n'(x) = H_{n-1}(x), and E[H_n(G)^2] = 1/n! for a
standard normal G.  Evaluation always goes through the three-term
recurrence (n+1) H_{n+1}(x) = x H_n(x) - H_{n-1}(x), which is stable for
the small degrees used here.
"""

import numpy as np


def hermite_eval_all(n_max, x):
    """Evaluate [H_0(x), ..., H_{n_max}(x)].

    ``x`` may be a scalar or an ndarray; the degree axis is appended last,
    so the result has shape ``x.shape + (n_max + 1,)``.
    """
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (n_max + 1,), dtype=float)
    out[..., 0] = 1.0
    if n_max >= 1:
        out[..., 1] = x
    for n in range(1, n_max):
        out[..., n + 1] = (x * out[..., n] - out[..., n - 1]) / (n + 1)
    return out


def hermite_eval(n, x):
    """Evaluate H_n(x); identical bit-for-bit to hermite_eval_all(n, x)[..., n]."""
    if n < 0:
        raise ValueError("n must be >= 0")
    res = hermite_eval_all(n, x)[..., n]
    if np.ndim(res) == 0:
        return float(res)
    return res
