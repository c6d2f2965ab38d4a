"""Total-degree polynomial design matrices in cube-local coordinates.

Columns are ordered by total degree, then lexicographically, so the
first C(d+f, f) columns always span the degree-f subspace.  Chebyshev
polynomials of the first kind (on the cube mapped to [-1,1]^d) are the
default; a raw monomial mode exists for testing.
"""

from math import comb

import numpy as np


def n_monomials(d, h):
    """Number of d-variate monomials of total degree <= h."""
    return comb(d + h, h)


def multi_indices(d, h):
    """Multi-indices |alpha| <= h in graded lexicographic order."""
    out = []
    for deg in range(h + 1):
        out.extend(_fixed_degree(d, deg))
    return out


def _fixed_degree(d, deg):
    if d == 1:
        return [(deg,)]
    out = []
    for first in range(deg, -1, -1):
        out.extend((first,) + rest for rest in _fixed_degree(d - 1, deg - first))
    return out


def _cheb_1d(u, h):
    """T_0..T_h at points u, shape (len(u), h+1)."""
    vals = np.empty((u.size, h + 1))
    vals[:, 0] = 1.0
    if h >= 1:
        vals[:, 1] = u
    for k in range(2, h + 1):
        vals[:, k] = 2.0 * u * vals[:, k - 1] - vals[:, k - 2]
    return vals


def _mono_1d(u, h):
    vals = np.empty((u.size, h + 1))
    vals[:, 0] = 1.0
    for k in range(1, h + 1):
        vals[:, k] = vals[:, k - 1] * u
    return vals


def design_matrix(points, degree, lower=None, side=1.0, basis="chebyshev"):
    """Design matrix over the multi-index set, in cube-local coordinates.

    points: (n, d) global coordinates; lower/side describe the cube, and
    points are mapped to [-1,1]^d before evaluation.
    """
    points = np.asarray(points, dtype=np.float64)
    n, d = points.shape
    if lower is None:
        lower = np.zeros(d)
    u = 2.0 * (points - np.asarray(lower)[None, :]) / side - 1.0
    oned = _cheb_1d if basis == "chebyshev" else _mono_1d
    if basis not in ("chebyshev", "monomial"):
        raise ValueError(f"unknown polynomial basis {basis!r}")
    per_dim = [oned(u[:, j], degree) for j in range(d)]
    idx = multi_indices(d, degree)
    V = np.empty((n, len(idx)))
    for c, alpha in enumerate(idx):
        col = per_dim[0][:, alpha[0]].copy()
        for j in range(1, d):
            col *= per_dim[j][:, alpha[j]]
        V[:, c] = col
    return V


def trend_design(points, degree, basis="chebyshev"):
    """Trend design over the root cube [0,1]^d (the model's M matrix)."""
    return design_matrix(points, degree, lower=None, side=1.0, basis=basis)
