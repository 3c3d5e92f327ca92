"""Finite-difference derivative tables on uniform grids.

Stencil coefficients are generated once per (offsets, order) pair by solving
the Taylor moment system in exact rational arithmetic, so central and shifted
one-sided closures share a single code path at fourth-order accuracy.
"""

from fractions import Fraction
from functools import lru_cache

import numpy as np

__all__ = ["stencil_coefficients", "derivative_table"]


@lru_cache(maxsize=None)
def stencil_coefficients(offsets, order):
    """Weights c_j with sum_j c_j y(x + o_j h) = h^order y^(order)(x) + O(h^4).

    Solved exactly over the rationals (Gaussian elimination on the Taylor
    moment matrix), then converted to float.  ``offsets`` must be a tuple of
    distinct integers with len(offsets) > order.
    """
    n = len(offsets)
    if order >= n:
        raise ValueError("stencil too short for requested derivative order")
    # Moment matrix M[m][j] = o_j^m / m!; right side selects the m=order row.
    mat = [[Fraction(o) ** m / _factorial(m) for o in offsets] for m in range(n)]
    rhs = [Fraction(1) if m == order else Fraction(0) for m in range(n)]
    coef = _solve_exact(mat, rhs)
    return np.array([float(c) for c in coef])


@lru_cache(maxsize=None)
def _factorial(m):
    out = Fraction(1)
    for k in range(2, m + 1):
        out *= k
    return out


def _solve_exact(mat, rhs):
    n = len(rhs)
    a = [row[:] + [rhs[i]] for i, row in enumerate(mat)]
    for col in range(n):
        piv = next(r for r in range(col, n) if a[r][col] != 0)
        a[col], a[piv] = a[piv], a[col]
        inv = 1 / a[col][col]
        a[col] = [x * inv for x in a[col]]
        for r in range(n):
            if r != col and a[r][col] != 0:
                factor = a[r][col]
                a[r] = [x - factor * y for x, y in zip(a[r], a[col])]
    return [a[r][n] for r in range(n)]


def _stencil_plan(order, acc=4):
    """Interior central stencil plus shifted closures for each boundary row."""
    n_central = 2 * ((order + 1) // 2) - 1 + acc
    half = (n_central - 1) // 2
    n_sided = order + acc
    rows = []
    for i in range(half):
        offsets = tuple(range(-i, n_sided - i))
        rows.append(stencil_coefficients(offsets, order))
    central = stencil_coefficients(tuple(range(-half, half + 1)), order)
    return half, n_sided, rows, central


def derivative_table(y, h, order, acc=4):
    """Return the ``order``-th derivative of samples ``y`` on spacing ``h``.

    Fourth-order accurate by default, including the one-sided boundary rows.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    half, n_sided, edge_rows, central = _stencil_plan(order, acc)
    if n < max(n_sided, 2 * half + 1):
        raise ValueError(f"need at least {max(n_sided, 2 * half + 1)} samples")

    out = np.empty(n)
    # Interior: one strided dot per stencil entry, no Python-level node loop.
    core = slice(half, n - half)
    acc_sum = np.zeros(n - 2 * half)
    for k, c in enumerate(central):
        acc_sum += c * y[k: n - 2 * half + k]
    out[core] = acc_sum

    for i, row in enumerate(edge_rows):
        out[i] = row @ y[:n_sided]
        out[n - 1 - i] = ((-1.0) ** order) * (row @ y[::-1][:n_sided])
    return out / h**order
