"""Adaptive 2^d-tree over observation locations, with the dilation and
level-dependent admissibility queries used by covariance tapering.

Cubes are indexed by level-order Morton codes (bit-interleaved grid
coordinates, dimension j occupying bit j of each d-bit group), so
ancestor lookup is a right shift and neighbour lookup is decode/offset/
encode.  Empty cubes are never materialized.  After construction the
tree is immutable; point sets of every cube are contiguous slices of a
single permutation array (DFS leaf order).
"""

import numpy as np

_MAX_LEVEL = 48


class Cube:
    __slots__ = ("level", "code", "coords", "lower", "side", "start", "end", "children", "is_leaf")

    def __init__(self, level, code, coords, lower, side):
        self.level = level
        self.code = code
        self.coords = coords
        self.lower = lower
        self.side = side
        self.start = 0
        self.end = 0
        self.children = []
        self.is_leaf = False

    @property
    def n_points(self):
        return self.end - self.start

    def __repr__(self):
        kind = "leaf" if self.is_leaf else "internal"
        return f"Cube(level={self.level}, code={self.code}, {kind}, n={self.n_points})"


class DecompositionTree:
    """Result of the recursive subdivision; read-only after build."""

    def __init__(self, data, leaf_threshold):
        self.data = data
        self.dim = data.dim
        self.n = data.n
        self.leaf_threshold = leaf_threshold
        self.levels = []  # level -> {code: Cube}
        self.perm = None
        self.root = None
        self.max_level = 0
        self._dilation_cache = {}

    def cube(self, level, code):
        try:
            return self.levels[level][code]
        except (IndexError, KeyError):
            raise KeyError(f"no cube at level {level} with index {code}") from None

    def cubes_at(self, level):
        """Cubes of one level in Morton order."""
        return [self.levels[level][c] for c in sorted(self.levels[level])]

    def point_ids(self, cube):
        return self.perm[cube.start : cube.end]

    def points(self, cube):
        return self.data.locations[self.perm[cube.start : cube.end]]

    def ancestor_code(self, level_from, code, level_to):
        """Morton code of the level_to ancestor of a level_from cube."""
        if level_to > level_from:
            raise ValueError("ancestor level must not exceed cube level")
        return code >> (self.dim * (level_from - level_to))

    def leaf_cubes(self):
        return [c for lvl in self.levels for c in lvl.values() if c.is_leaf]

    def stats(self):
        occ = [c.n_points for c in self.leaf_cubes()]
        return {
            "n": self.n,
            "dim": self.dim,
            "max_level": self.max_level,
            "n_cubes": sum(len(lvl) for lvl in self.levels),
            "n_leaves": len(occ),
            "leaf_occupancy_min": int(min(occ)),
            "leaf_occupancy_max": int(max(occ)),
        }


def build_tree(data, leaf_threshold):
    """Recursive 2^d subdivision until every cube holds <= leaf_threshold points."""
    if leaf_threshold < 1:
        raise ValueError("leaf_threshold must be >= 1")
    tree = DecompositionTree(data, leaf_threshold)
    d = tree.dim
    x = data.locations
    perm = []
    root = Cube(0, 0, (0,) * d, np.zeros(d), 1.0)
    tree.levels.append({0: root})
    tree.root = root

    stack = [(root, np.arange(tree.n))]
    # iterative DFS that still assigns contiguous slices: children are
    # pushed in reverse Morton order so pop() visits them ascending
    order = []
    while stack:
        cube, ids = stack.pop()
        order.append(cube)
        if ids.size <= leaf_threshold:
            cube.is_leaf = True
            cube.start = len(perm)
            perm.extend(np.sort(ids).tolist())
            cube.end = len(perm)
            continue
        if cube.level >= _MAX_LEVEL:
            raise ValueError(
                f"subdivision stalled at level {cube.level}: {ids.size} points "
                "are closer than double precision can separate"
            )
        lvl = cube.level + 1
        if lvl > tree.max_level:
            tree.max_level = lvl
            tree.levels.append({})
        half = cube.side / 2.0
        child_bits = np.zeros(ids.size, dtype=np.int64)
        for j in range(d):
            child_bits |= (x[ids, j] >= cube.lower[j] + half).astype(np.int64) << j
        for b in range(2**d - 1, -1, -1):
            sub = ids[child_bits == b]
            if sub.size == 0:
                continue
            coords = tuple(cube.coords[j] * 2 + ((b >> j) & 1) for j in range(d))
            child = Cube(lvl, (cube.code << d) | b, coords,
                         cube.lower + half * np.array([(b >> j) & 1 for j in range(d)]), half)
            tree.levels[lvl][child.code] = child
            cube.children.append(child)
            stack.append((child, sub))
        cube.children.reverse()  # ascending Morton order

    # internal cubes cover the contiguous span of their descendants
    for cube in reversed(order):
        if not cube.is_leaf:
            cube.start = cube.children[0].start
            cube.end = cube.children[-1].end
    tree.perm = np.asarray(perm, dtype=np.int64)
    return tree


def _neighbors(tree, level, coords):
    """Existing level cubes sharing a face, edge or corner with coords."""
    d = tree.dim
    limit = 1 << level
    lvl = tree.levels[level]
    out = []
    for off in _offsets(d):
        nb = tuple(coords[j] + off[j] for j in range(d))
        if any(c < 0 or c >= limit for c in nb):
            continue
        code = _encode(nb, level, d)
        if code in lvl:
            out.append((code, nb))
    return out


def _offsets(d):
    if d == 1:
        return [(-1,), (1,)]
    if d == 2:
        return [(i, j) for i in (-1, 0, 1) for j in (-1, 0, 1) if (i, j) != (0, 0)]
    return [
        (i, j, k)
        for i in (-1, 0, 1)
        for j in (-1, 0, 1)
        for k in (-1, 0, 1)
        if (i, j, k) != (0, 0, 0)
    ]


def _encode(coords, level, d):
    code = 0
    for b in range(level):
        for j in range(d):
            code |= ((coords[j] >> b) & 1) << (b * d + j)
    return code


def _decode(code, level, d):
    coords = [0] * d
    for b in range(level):
        for j in range(d):
            coords[j] |= ((code >> (b * d + j)) & 1) << b
    return tuple(coords)


def expanded_cube(tree, level, code, tau):
    """Morton codes of the non-empty level cubes in the tau-fold dilation.

    One dilation step adds every existing cube sharing a face or corner
    (an edge counts in 3D) with the current region.
    """
    if tau < 0:
        raise ValueError("tau must be >= 0")
    key = (level, code, tau)
    cached = tree._dilation_cache.get(key)
    if cached is not None:
        return cached
    seed = tree.cube(level, code)  # existence check
    region = {code: seed.coords}
    frontier = dict(region)
    for _ in range(tau):
        new = {}
        for _, coords in frontier.items():
            for ncode, ncoords in _neighbors(tree, level, coords):
                if ncode not in region:
                    new[ncode] = ncoords
        if not new:
            break
        region.update(new)
        frontier = new
    result = frozenset(region)
    tree._dilation_cache[key] = result
    return result


def taper_predicate(tree, i, k, j, l, tau):
    """Level-dependent admissibility of the cube pair (B^i_k, B^j_l).

    True iff (j >= i and B^j_l lies inside L^{i,tau}_k) or (j < i and
    B^i_k lies inside L^{j,tau}_l); pairs touching level -1 are always
    admissible.
    """
    if i == -1 or j == -1:
        return True
    tree.cube(i, k)
    tree.cube(j, l)
    if j >= i:
        return tree.ancestor_code(j, l, i) in expanded_cube(tree, i, k, tau)
    return tree.ancestor_code(i, k, j) in expanded_cube(tree, j, l, tau)
