"""Orthonormal multi-level contrast basis.

Bottom-up two-phase orthogonal factorization over the decomposition
tree.  Every cube carries a small orthonormal "scaling" family supported
on its points; a leaf factors its local polynomial design directly,
an internal cube factors the stacked moment images of its children's
scaling vectors.  Null-moment combinations become the cube's contrast
vectors (rows of W, annihilating all polynomials up to the basis
degree); the surviving combinations are passed upward.  At the root the
final family is split once more against the trend-degree moments only:
the trend-carrying part becomes L, the remainder the level -1 group.

Row order of W is fixed: levels t, t-1, ..., 0, then level -1, cubes in
Morton order within a level, factorization column order within a cube.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .polynomials import design_matrix, n_monomials

_RANK_RTOL = 1e-12


@dataclass(frozen=True)
class DesignSpec:
    """Trend degree f and basis degree f_tilde >= f."""

    f: int
    f_tilde: int
    basis: str = "chebyshev"

    def __post_init__(self):
        if self.f < 0 or self.f_tilde < self.f:
            raise ValueError("need 0 <= f <= f_tilde")
        if self.basis not in ("chebyshev", "monomial"):
            raise ValueError(f"unknown polynomial basis {self.basis!r}")

    def p(self, dim):
        return n_monomials(dim, self.f)

    def p_tilde(self, dim):
        return n_monomials(dim, self.f_tilde)


class RankDeficiencyError(ValueError):
    pass


@dataclass(frozen=True)
class ContrastGroup:
    """Rows of W belonging to one cube: rows [row_start, row_end)."""

    level: int
    code: int
    row_start: int
    row_end: int
    pt_start: int  # support slice into tree.perm
    pt_end: int

    @property
    def n_rows(self):
        return self.row_end - self.row_start


class MultiLevelBasis:
    """The orthonormal pair (W, L) with fast sparse application."""

    def __init__(self, tree, spec, W, L, groups, level_ranges, centers):
        self.tree = tree
        self.spec = spec
        self.n = tree.n
        self.dim = tree.dim
        self.p = spec.p(tree.dim)
        self.p_tilde = spec.p_tilde(tree.dim)
        self.W = W  # csr, (n-p) x n
        self.L = L  # dense, p x n
        self.groups = groups  # row order
        self.group_of = {(g.level, g.code): g for g in groups}
        self.level_ranges = level_ranges  # level -> (row_lo, row_hi)
        self._row_centers = centers

    @property
    def n_rows(self):
        return self.W.shape[0]

    def rows_down_to(self, min_level):
        """Number of leading W rows covering levels t .. min_level."""
        if min_level == -1:
            return self.n_rows
        if min_level not in self.level_ranges:
            raise ValueError(f"no basis rows at level {min_level}")
        return self.level_ranges[min_level][1]

    def apply_W(self, v):
        v = np.asarray(v, dtype=np.float64)
        if v.shape[0] != self.n:
            raise ValueError(f"expected length-{self.n} vector, got {v.shape}")
        return self.W @ v

    def apply_Wt(self, u):
        u = np.asarray(u, dtype=np.float64)
        if u.shape[0] != self.n_rows:
            raise ValueError(f"expected length-{self.n_rows} vector, got {u.shape}")
        return self.W.T @ u

    def apply_L(self, v):
        v = np.asarray(v, dtype=np.float64)
        if v.shape[0] != self.n:
            raise ValueError(f"expected length-{self.n} vector, got {v.shape}")
        return self.L @ v

    def apply_Lt(self, u):
        u = np.asarray(u, dtype=np.float64)
        if u.shape[0] != self.p:
            raise ValueError(f"expected length-{self.p} vector, got {u.shape}")
        return self.L.T @ u

    def dense_W(self):
        return self.W.toarray()

    def dense_P(self):
        """Stacked [W; L] as a dense orthogonal matrix (small n only)."""
        return np.vstack([self.W.toarray(), self.L])

    def row_centers(self):
        """Cube center per W row (level -1 rows map to the root center)."""
        return self._row_centers

    def predicted_nnz(self):
        """Structural nonzero count implied by the tree occupancy sums."""
        total = sum(g.n_rows * (g.pt_end - g.pt_start) for g in self.groups)
        return total

    def stats(self):
        per_level = {
            lvl: hi - lo for lvl, (lo, hi) in sorted(self.level_ranges.items(), reverse=True)
        }
        return {
            "n": self.n,
            "p": self.p,
            "p_tilde": self.p_tilde,
            "rows": self.n_rows,
            "nnz_W": int(self.W.nnz),
            "rows_per_level": per_level,
        }


def _rank(s):
    if s.size == 0 or s[0] <= 0.0:
        return 0
    return int(np.sum(s > _RANK_RTOL * s[0]))


def build_basis(tree, spec):
    """Construct the multi-level basis for a decomposition tree."""
    data = tree.data
    d = tree.dim
    n = tree.n
    p = spec.p(d)
    pt = spec.p_tilde(d)
    if n <= p:
        raise RankDeficiencyError(f"need more observations than trend monomials: n={n} <= p={p}")
    if n < pt:
        raise RankDeficiencyError(
            f"degree-{spec.f_tilde} design needs at least p_tilde={pt} points, got n={n}"
        )

    x = data.locations
    perm = tree.perm
    # per level: list of (cube, contrast_matrix) in Morton (DFS) order
    contrasts = {lvl: [] for lvl in range(tree.max_level + 1)}

    def factor(cube):
        pts = x[perm[cube.start : cube.end]]
        if cube.is_leaf:
            S = np.eye(cube.n_points)
        else:
            q = 0
            blocks = [factor(ch) for ch in cube.children]
            q = sum(b.shape[1] for b in blocks)
            S = np.zeros((cube.n_points, q))
            col = 0
            for ch, b in zip(cube.children, blocks):
                off = ch.start - cube.start
                S[off : off + b.shape[0], col : col + b.shape[1]] = b
                col += b.shape[1]
        V = design_matrix(pts, spec.f_tilde, lower=cube.lower, side=cube.side, basis=spec.basis)
        A = V.T @ S
        _, s, Vt = np.linalg.svd(A, full_matrices=True)
        r = _rank(s)
        if r < S.shape[1]:
            contrasts[cube.level].append((cube, S @ Vt[r:].T))
        return S @ Vt[:r].T

    S_root = factor(tree.root)
    if S_root.shape[1] != pt:
        raise RankDeficiencyError(_deficiency_message(tree, spec, S_root))

    # root split against the trend moments only
    V_f = design_matrix(
        x[perm], spec.f, lower=tree.root.lower, side=tree.root.side, basis=spec.basis
    )
    A_f = V_f.T @ S_root
    _, s, Vt = np.linalg.svd(A_f, full_matrices=True)
    if _rank(s) != p:
        raise RankDeficiencyError(
            f"trend design of degree {spec.f} is rank deficient ({_rank(s)} < {p})"
        )
    L_local = S_root @ Vt[:p].T  # n x p, in permuted point order
    extra = S_root @ Vt[p:].T  # n x (pt - p), level -1 group

    # ---- assemble W rows in the fixed order [W_t, ..., W_0, W_-1] ----
    rows_data, rows_cols, rows_ptr = [], [], [0]
    groups = []
    centers = []
    level_ranges = {}
    row = 0
    for lvl in range(tree.max_level, -1, -1):
        lo = row
        for cube, mat in contrasts[lvl]:
            cols = perm[cube.start : cube.end]
            center = cube.lower + 0.5 * cube.side
            g = ContrastGroup(lvl, cube.code, row, row + mat.shape[1], cube.start, cube.end)
            groups.append(g)
            for jcol in range(mat.shape[1]):
                rows_data.append(mat[:, jcol])
                rows_cols.append(cols)
                rows_ptr.append(rows_ptr[-1] + cols.size)
                centers.append(center)
                row += 1
        level_ranges[lvl] = (lo, row)
    if extra.shape[1]:
        lo = row
        root_center = tree.root.lower + 0.5 * tree.root.side
        g = ContrastGroup(-1, 0, row, row + extra.shape[1], 0, n)
        groups.append(g)
        for jcol in range(extra.shape[1]):
            rows_data.append(extra[:, jcol])
            rows_cols.append(perm)
            rows_ptr.append(rows_ptr[-1] + n)
            centers.append(root_center)
            row += 1
        level_ranges[-1] = (lo, row)

    assert row == n - p, f"contrast count {row} != n - p = {n - p}"
    W = sp.csr_matrix(
        (
            np.concatenate(rows_data) if rows_data else np.zeros(0),
            np.concatenate(rows_cols) if rows_cols else np.zeros(0, dtype=np.int64),
            np.asarray(rows_ptr, dtype=np.int64),
        ),
        shape=(n - p, n),
    )
    W.sort_indices()

    L = np.zeros((p, n))
    L[:, perm] = L_local.T

    return MultiLevelBasis(tree, spec, W, L, groups, level_ranges, np.asarray(centers))


def _deficiency_message(tree, spec, S_root):
    """Locate the smallest degree whose moment block is rank deficient."""
    x = tree.data.locations[tree.perm]
    V = design_matrix(x, spec.f_tilde, lower=tree.root.lower, side=tree.root.side,
                      basis=spec.basis)
    R = V.T @ S_root
    for h in range(spec.f_tilde + 1):
        ph = n_monomials(tree.dim, h)
        rank_h = np.linalg.matrix_rank(R[:ph, :], tol=None)
        if rank_h < ph:
            return (
                f"design matrix is rank deficient at degree {h}: "
                f"rank {rank_h} < {ph} monomials"
            )
    return f"design matrix of degree {spec.f_tilde} is rank deficient"
