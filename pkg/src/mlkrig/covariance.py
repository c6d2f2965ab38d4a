"""Tapered multi-level covariance assembly and related exact operators.

Every admissible cube pair (per the level-dependent tapering criterion)
contributes a dense block psi_a^T C(theta) psi_b computed by exact
double summation over the two supports, vectorized as two small matrix
products around the cross-kernel block.  Pairs touching level -1 are
always admissible.  Inadmissible entries are structurally zero.

Kernel values come from exact evaluation or, when the model has a
spline attached, from the spline accelerator; a precomputed dense
kernel matrix can be passed to amortize evaluations across assemblies
with the same theta.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .polynomials import multi_indices
from .tree import expanded_cube


def pair_distances(a, b):
    d2 = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * (a @ b.T)
    return np.sqrt(np.maximum(d2, 0.0))


class TaperedCovariance:
    """Block-sparse symmetric contrast covariance C~_W^i(theta)."""

    def __init__(self, matrix, basis, kernel, tau, min_level, groups):
        self.matrix = matrix  # csr, full symmetric storage
        self.basis = basis
        self.kernel = kernel
        self.theta = kernel.theta
        self.tau = tau
        self.min_level = min_level
        self.groups = groups

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def nnz(self):
        return self.matrix.nnz

    def density(self):
        """Stored fraction including both symmetric halves."""
        n = self.matrix.shape[0]
        return self.matrix.nnz / float(n * n)

    def diagonal(self):
        return self.matrix.diagonal()

    def stats(self):
        diag = self.diagonal()
        per_level = {}
        for g in self.groups:
            per_level[g.level] = per_level.get(g.level, 0) + g.n_rows
        return {
            "rows": self.matrix.shape[0],
            "tau": self.tau,
            "min_level": self.min_level,
            "nnz": int(self.matrix.nnz),
            "density_pct": 100.0 * self.density(),
            "half_density_pct": 50.0 * self.density(),
            "diag_min": float(diag.min()),
            "diag_max": float(diag.max()),
            "rows_per_level": per_level,
        }

    def export_triplets(self, path):
        """Text triplet export: 'row col value' with 17 significant digits."""
        coo = self.matrix.tocoo()
        with open(path, "w") as fh:
            for r, c, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{r} {c} {v:.17g}\n")


def _admissible_pairs(basis, tau, min_level):
    """Unordered admissible group pairs, coarser member first.

    Enumerates (j >= i and B^j_l inside L^{i,tau}_k) once per pair via
    Morton-range descendant lookups; level -1 pairs with everything.
    """
    tree = basis.tree
    d = tree.dim
    groups = [g for g in basis.groups if g.level >= min_level or min_level == -1]
    by_level = {}
    for gi, g in enumerate(groups):
        by_level.setdefault(g.level, []).append(gi)
    level_codes = {
        lvl: np.array([groups[gi].code for gi in idx], dtype=object)
        for lvl, idx in by_level.items()
    }
    max_level = max((g.level for g in groups), default=-1)

    pairs = []
    for ia, ga in enumerate(groups):
        i = ga.level
        if i == -1:
            for ib in range(ia, len(groups)):
                pairs.append((ia, ib))
            continue
        if tau == math.inf:
            members = None
        else:
            members = sorted(expanded_cube(tree, i, ga.code, tau))
        for j in range(i, max_level + 1):
            if j not in by_level:
                continue
            codes = level_codes[j]
            idx = by_level[j]
            if members is None:
                take = range(len(idx))
            else:
                take = []
                shift = d * (j - i)
                for m in members:
                    lo = np.searchsorted(codes, m << shift, side="left")
                    hi = np.searchsorted(codes, (m + 1) << shift, side="left")
                    take.extend(range(lo, hi))
            for t in take:
                ib = idx[t]
                if j == i and ib < ia:
                    continue
                pairs.append((min(ia, ib), max(ia, ib)))
    return groups, pairs


def assemble(basis, kernel, tau, min_level=-1, dense_cache=None):
    """Assemble the tapered contrast covariance for levels t .. min_level."""
    if min_level != -1 and min_level not in basis.level_ranges:
        raise ValueError(f"min_level {min_level} outside tree levels")
    tree = basis.tree
    x = tree.data.locations
    perm = tree.perm
    groups, pairs = _admissible_pairs(basis, tau, min_level)
    n_rows = basis.rows_down_to(min_level)

    # contrast vectors per group as dense local blocks
    Wd = basis.W
    local = []
    for g in groups:
        block = Wd[g.row_start : g.row_end, :].T[perm[g.pt_start : g.pt_end], :].toarray()
        local.append(np.ascontiguousarray(block))  # (m, r)

    # pass 1: row nonzero counts
    counts = np.zeros(n_rows, dtype=np.int64)
    for ia, ib in pairs:
        ga, gb = groups[ia], groups[ib]
        counts[ga.row_start : ga.row_end] += gb.n_rows
        if ia != ib:
            counts[gb.row_start : gb.row_end] += ga.n_rows
    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    nnz = int(indptr[-1])
    indices = np.empty(nnz, dtype=np.int32)
    data = np.empty(nnz, dtype=np.float64)
    cursor = indptr[:-1].copy()

    def scatter(g_rows, o_rows, block):
        r_a = g_rows.stop - g_rows.start
        r_b = o_rows.stop - o_rows.start
        pos = (cursor[g_rows][:, None] + np.arange(r_b)[None, :]).ravel()
        indices[pos] = np.tile(np.arange(o_rows.start, o_rows.stop, dtype=np.int32), r_a)
        data[pos] = block.ravel()
        cursor[g_rows] += r_b

    # pass 2: numeric blocks
    for ia, ib in pairs:
        ga, gb = groups[ia], groups[ib]
        pa = perm[ga.pt_start : ga.pt_end]
        pb = perm[gb.pt_start : gb.pt_end]
        if dense_cache is not None:
            K = dense_cache[np.ix_(pa, pb)]
        else:
            K = kernel.eval_table(pair_distances(x[pa], x[pb]))
        block = local[ia].T @ (K @ local[ib])
        ra = slice(ga.row_start, ga.row_end)
        rb = slice(gb.row_start, gb.row_end)
        scatter(ra, rb, block)
        if ia != ib:
            scatter(rb, ra, block.T)

    mat = sp.csr_matrix((data, indices, indptr), shape=(n_rows, n_rows))
    mat.sort_indices()
    return TaperedCovariance(mat, basis, kernel, tau, min_level, groups)


def dense_kernel_matrix(kernel, locations, exact=True, chunk=2048):
    """Dense C(theta) over all locations, evaluated in row chunks."""
    x = np.asarray(locations)
    n = x.shape[0]
    C = np.empty((n, n))
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        r = pair_distances(x[lo:hi], x)
        C[lo:hi] = kernel.phi_vec(r) if exact else kernel.eval_table(r)
    return C


def dense_cov_apply(kernel, locations, v, chunk=2048, dense_cache=None):
    """C(theta) @ v by direct O(n^2) summation (v may be a matrix)."""
    if dense_cache is not None:
        return dense_cache @ v
    x = np.asarray(locations)
    n = x.shape[0]
    v = np.asarray(v, dtype=np.float64)
    out = np.empty((n,) + v.shape[1:])
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        K = kernel.eval_table(pair_distances(x[lo:hi], x))
        out[lo:hi] = K @ v
    return out


def matvec_exact(basis, kernel, v, dense_cache=None):
    """W C(theta) W^T v with the dense kernel product done exactly."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[0] != basis.n_rows:
        raise ValueError(f"expected length-{basis.n_rows} contrast vector, got {v.shape}")
    z = basis.apply_Wt(v)
    cz = dense_cov_apply(kernel, basis.tree.data.locations, z, dense_cache=dense_cache)
    return basis.apply_W(cz)


class NotPositiveDiagonal(RuntimeError):
    pass


def diag_preconditioner(basis, kernel, dense_cache=None, rows=None):
    """Exact diagonal of C_W: psi_a^T C psi_a per contrast row.

    Always strictly positive for a positive definite kernel; a
    non-positive entry indicates a broken kernel or construction bug.
    """
    tree = basis.tree
    x = tree.data.locations
    perm = tree.perm
    n_rows = basis.n_rows if rows is None else rows
    out = np.empty(n_rows)
    for g in basis.groups:
        if g.row_start >= n_rows:
            break
        pa = perm[g.pt_start : g.pt_end]
        psi = basis.W[g.row_start : g.row_end, :].T[pa, :].toarray()
        if dense_cache is not None:
            K = dense_cache[np.ix_(pa, pa)]
        else:
            K = kernel.eval_table(pair_distances(x[pa], x[pa]))
        out[g.row_start : g.row_end] = np.einsum("ji,jk,ki->i", psi, K, psi, optimize=True)
    if np.any(out <= 0.0):
        bad = int(np.argmin(out))
        raise NotPositiveDiagonal(
            f"diagonal entry {bad} of C_W is {out[bad]:.3e} <= 0; "
            "kernel is not positive definite or the basis is corrupted"
        )
    return out


# ---------------------------------------------------------------------------
# Lemma-style decay bound for admissible cube pairs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecayBound:
    """Taylor-remainder bound on |psi_a^T C psi_b| for one cube pair."""

    cube_a: tuple
    cube_b: tuple
    r_a: float
    r_b: float
    order: int  # f_tilde + 1
    value: float


def _fd_weights(order):
    """Central-difference stencil (offsets, weights) for d^order/dx^order."""
    k = np.arange(order + 1)
    w = (-1.0) ** k * np.array([math.comb(order, int(i)) for i in k])
    offs = order / 2.0 - k
    return offs, w


def _mixed_derivative(fun, u, gamma, h):
    """D^gamma of fun at points u (m, d) by nested central differences."""
    pts = u[None, :, :]
    wts = np.ones(1)
    for j, gj in enumerate(gamma):
        if gj == 0:
            continue
        offs, w = _fd_weights(gj)
        shifted = np.repeat(pts, offs.size, axis=0)
        for s in range(pts.shape[0]):
            for o in range(offs.size):
                shifted[s * offs.size + o, :, j] += offs[o] * h
        pts = shifted
        wts = (wts[:, None] * (w / h**gj)[None, :]).ravel()
    flat = pts.reshape(-1, u.shape[1])
    vals = fun(np.linalg.norm(flat, axis=1)).reshape(pts.shape[0], u.shape[0])
    return wts @ vals


def _ball_samples(center, radius, d, n_grid):
    axes = [np.linspace(c - radius / math.sqrt(d), c + radius / math.sqrt(d), n_grid)
            for c in center]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    return grid


def lemma1_bound(tree, kernel, spec, i, l, j, k, n_grid=3):
    """Right side of the decay bound for the pair (B^i_l, B^j_k).

    sum over |alpha| = |beta| = f_tilde + 1 of
    r_a^alpha/alpha! * r_b^beta/beta! * sup |D_x^alpha D_y^beta phi|,
    with the sup sampled on a grid of point pairs in the enclosing balls
    and mixed derivatives taken by nested central differences.
    """
    ca = tree.cube(i, l)
    cb = tree.cube(j, k)
    d = tree.dim
    r_a = ca.side / 2.0 * math.sqrt(d)
    r_b = cb.side / 2.0 * math.sqrt(d)
    mid_a = ca.lower + ca.side / 2.0
    mid_b = cb.lower + cb.side / 2.0
    gap = float(np.linalg.norm(mid_a - mid_b)) - r_a - r_b
    if gap <= 0.0:
        raise ValueError(
            f"enclosing balls of B^{i}_{l} and B^{j}_{k} overlap; bound undefined"
        )
    order = spec.f_tilde + 1
    xa = _ball_samples(mid_a, r_a, d, n_grid)
    xb = _ball_samples(mid_b, r_b, d, n_grid)
    u = (xa[:, None, :] - xb[None, :, :]).reshape(-1, d)
    h = gap / (4.0 * order)

    alphas = [a for a in multi_indices(d, order) if sum(a) == order]
    sup_cache = {}
    total = 0.0
    for alpha in alphas:
        for beta in alphas:
            gamma = tuple(a + b for a, b in zip(alpha, beta))
            if gamma not in sup_cache:
                vals = _mixed_derivative(kernel.phi_vec, u, gamma, h)
                sup_cache[gamma] = float(np.max(np.abs(vals)))
            fa = math.prod(math.factorial(a) for a in alpha)
            fb = math.prod(math.factorial(b) for b in beta)
            total += sup_cache[gamma] / (fa * fb)
    value = r_a**order * r_b**order * total
    return DecayBound((i, l), (j, k), r_a, r_b, order, value)
