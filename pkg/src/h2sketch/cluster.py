"""Cluster tree and block partition.

The cluster tree is a complete binary KD-tree: every leaf sits at the same
depth and nodes are stored contiguously level by level (heap layout, the
children of node ``i`` at depth ``k`` are ``2i`` and ``2i + 1`` at depth
``k + 1``).  The matrix tree is the result of the dual traversal of that tree
under the general admissibility condition.

Depth counts from the root (root = depth 0).  The construction algorithm
works bottom-up and speaks of *levels*, with ``level = n_levels - depth``,
so the leaves are level 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

INNER, ADMISSIBLE, DENSE = 0, 1, 2
STATUS_NAMES = {INNER: "inner", ADMISSIBLE: "admissible_leaf", DENSE: "inadmissible_leaf"}


@dataclass(frozen=True)
class ClusterNode:
    depth: int
    index: int
    begin: int
    end: int
    bbox_min: np.ndarray
    bbox_max: np.ndarray
    level: int
    is_leaf: bool

    @property
    def size(self) -> int:
        return self.end - self.begin

    @property
    def diameter(self) -> float:
        return float(np.sqrt(np.sum((self.bbox_max - self.bbox_min) ** 2)))

    def children(self) -> tuple[tuple[int, int], ...]:
        if self.is_leaf:
            return ()
        return (self.depth + 1, 2 * self.index), (self.depth + 1, 2 * self.index + 1)


def box_diameters(bmin, bmax):
    return np.sqrt(np.sum((bmax - bmin) ** 2, axis=-1))


def box_distances(smin, smax, tmin, tmax, metric="center"):
    """Distance between axis-aligned boxes (broadcasting).

    ``metric="center"`` measures between box centres, ``metric="box"`` is the
    minimum distance between any two points of the boxes.
    """
    if metric == "center":
        gap = 0.5 * ((smin + smax) - (tmin + tmax))
    elif metric == "box":
        gap = np.maximum(0.0, np.maximum(tmin - smax, smin - tmax))
    else:
        raise ValueError(f"unknown distance metric {metric!r}")
    return np.sqrt(np.sum(gap**2, axis=-1))


def admissible_mask(smin, smax, tmin, tmax, eta, metric="center"):
    """Vectorised admissibility test.

    Pairs at zero distance are never admissible, which also covers the
    degenerate case of two zero-diameter boxes at the same location.
    """
    dist = box_distances(smin, smax, tmin, tmax, metric)
    avg_diam = 0.5 * (box_diameters(smin, smax) + box_diameters(tmin, tmax))
    return (dist > 0) & (avg_diam <= eta * dist)


def is_admissible(s: ClusterNode, t: ClusterNode, eta: float, metric: str = "center") -> bool:
    """True iff ``(D(s) + D(t)) / 2 <= eta * Dist(s, t)``.

    ``D`` is the bounding-box diagonal; ``Dist`` follows ``metric`` (see
    :func:`box_distances`).
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    return bool(admissible_mask(s.bbox_min, s.bbox_max, t.bbox_min, t.bbox_max, eta, metric))


def count_levels(n: int, leaf_size: int) -> int:
    levels = 1
    while -(-n // 2 ** (levels - 1)) > leaf_size:
        levels += 1
    return levels


class ClusterTree:
    """Complete binary KD-tree over a point cloud.

    Attributes
    ----------
    points : (n, dim) array, original ordering
    coords : (n, dim) array, tree ordering (``points[perm]``)
    perm : tree index -> original index
    iperm : original index -> tree index
    begin, end : per-depth arrays of half-open index ranges
    bbox_min, bbox_max : per-depth (nodes, dim) bounding boxes
    """

    def __init__(self, points, leaf_size: int):
        points = np.asarray(points, dtype=np.float64)
        if points.ndim == 1:
            points = points[:, None]
        if points.ndim != 2 or points.shape[0] < 1:
            raise ValueError("points must be a non-empty (n, dim) array")
        if not np.all(np.isfinite(points)):
            raise ValueError("points contain non-finite coordinates")
        if leaf_size < 2:
            raise ValueError("leaf_size must be at least 2")

        self.points = points
        self.n, self.dim = points.shape
        self.leaf_size = int(leaf_size)
        self.n_levels = count_levels(self.n, self.leaf_size)

        perm = np.arange(self.n)
        ranges = [(0, self.n)]
        self.begin, self.end, self.bbox_min, self.bbox_max = [], [], [], []
        for depth in range(self.n_levels):
            b = np.array([r[0] for r in ranges], dtype=np.int64)
            e = np.array([r[1] for r in ranges], dtype=np.int64)
            lo = np.empty((len(ranges), self.dim))
            hi = np.empty((len(ranges), self.dim))
            next_ranges = []
            for i, (rb, re) in enumerate(ranges):
                member = points[perm[rb:re]]
                lo[i] = member.min(axis=0)
                hi[i] = member.max(axis=0)
                if depth == self.n_levels - 1:
                    continue
                # argmax returns the lowest axis on ties
                axis = int(np.argmax(hi[i] - lo[i]))
                order = np.argsort(member[:, axis], kind="stable")
                perm[rb:re] = perm[rb:re][order]
                mid = rb + (re - rb + 1) // 2
                next_ranges += [(rb, mid), (mid, re)]
            self.begin.append(b)
            self.end.append(e)
            self.bbox_min.append(lo)
            self.bbox_max.append(hi)
            ranges = next_ranges

        self.perm = perm
        self.iperm = np.empty_like(perm)
        self.iperm[perm] = np.arange(self.n)
        self.coords = points[perm]

    @property
    def leaf_depth(self) -> int:
        return self.n_levels - 1

    def n_nodes(self, depth: int) -> int:
        return 1 << depth

    def level(self, depth: int) -> int:
        return self.n_levels - depth

    def depth(self, level: int) -> int:
        return self.n_levels - level

    def node(self, depth: int, index: int) -> ClusterNode:
        return ClusterNode(
            depth=depth,
            index=index,
            begin=int(self.begin[depth][index]),
            end=int(self.end[depth][index]),
            bbox_min=self.bbox_min[depth][index],
            bbox_max=self.bbox_max[depth][index],
            level=self.level(depth),
            is_leaf=depth == self.leaf_depth,
        )

    def sizes(self, depth: int) -> np.ndarray:
        return self.end[depth] - self.begin[depth]

    def cluster_of(self, depth: int, idx) -> np.ndarray:
        """Index of the cluster at ``depth`` containing tree index ``idx``."""
        return np.searchsorted(self.begin[depth], idx, side="right") - 1

    def to_original(self, idx):
        return self.perm[idx]

    def to_tree(self, idx):
        return self.iperm[idx]

    def to_dict(self) -> dict:
        nodes = []
        for depth in range(self.n_levels):
            for i in range(self.n_nodes(depth)):
                nodes.append(
                    {
                        "depth": depth,
                        "level": self.level(depth),
                        "index": i,
                        "range": [int(self.begin[depth][i]), int(self.end[depth][i])],
                        "bbox_min": self.bbox_min[depth][i].tolist(),
                        "bbox_max": self.bbox_max[depth][i].tolist(),
                    }
                )
        return {
            "n": self.n,
            "dim": self.dim,
            "leaf_size": self.leaf_size,
            "n_levels": self.n_levels,
            "perm": self.perm.tolist(),
            "nodes": nodes,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def build_cluster_tree(points, leaf_size: int) -> ClusterTree:
    return ClusterTree(points, leaf_size)


def _csr(rows: np.ndarray, cols: np.ndarray, n_rows: int):
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    return np.cumsum(indptr), cols.astype(np.int64)


class MatrixTree:
    """Block partition from the dual traversal of a cluster tree.

    For each depth, ``pairs[depth]`` holds an ``(m, 2)`` array of cluster pairs
    and ``status[depth]`` their kind (``INNER``, ``ADMISSIBLE`` or ``DENSE``).
    Admissible leaves at a depth form the far-field adjacency ``far[depth]``;
    dense leaves (leaf depth only) form ``near``.  Adjacencies are CSR pairs
    ``(indptr, indices)`` with partners sorted ascending.
    """

    def __init__(self, tree: ClusterTree, eta: float, metric: str = "center"):
        if eta <= 0:
            raise ValueError("eta must be positive")
        self.tree = tree
        self.eta = float(eta)
        self.metric = metric
        self.pairs, self.status, self.far = [], [], []

        current = np.zeros((1, 2), dtype=np.int64)
        for depth in range(tree.n_levels):
            s, t = current[:, 0], current[:, 1]
            lo, hi = tree.bbox_min[depth], tree.bbox_max[depth]
            adm = admissible_mask(lo[s], hi[s], lo[t], hi[t], self.eta, metric)
            status = np.where(adm, ADMISSIBLE, INNER if depth < tree.leaf_depth else DENSE)
            order = np.lexsort((t, s))
            current, status = current[order], status[order]
            self.pairs.append(current)
            self.status.append(status.astype(np.int8))
            a = current[status == ADMISSIBLE]
            self.far.append(_csr(a[:, 0], a[:, 1], tree.n_nodes(depth)))
            inner = current[status == INNER]
            # the four child pairs of every inner pair
            cs = 2 * inner[:, :1] + np.array([0, 0, 1, 1])
            ct = 2 * inner[:, 1:] + np.array([0, 1, 0, 1])
            current = np.stack([cs.ravel(), ct.ravel()], axis=1)

        leaf = tree.leaf_depth
        d = self.pairs[leaf][self.status[leaf] == DENSE]
        self.near = _csr(d[:, 0], d[:, 1], tree.n_nodes(leaf))
        self._keys = [p[:, 0] * tree.n_nodes(k) + p[:, 1] for k, p in enumerate(self.pairs)]

    def far_partners(self, depth: int, s: int) -> np.ndarray:
        indptr, idx = self.far[depth]
        return idx[indptr[s] : indptr[s + 1]]

    def near_partners(self, s: int) -> np.ndarray:
        indptr, idx = self.near
        return idx[indptr[s] : indptr[s + 1]]

    def admissible_pairs(self, depth: int) -> np.ndarray:
        return self.pairs[depth][self.status[depth] == ADMISSIBLE]

    def dense_pairs(self) -> np.ndarray:
        leaf = self.tree.leaf_depth
        return self.pairs[leaf][self.status[leaf] == DENSE]

    def n_leaves(self) -> int:
        return int(sum(np.count_nonzero(s != INNER) for s in self.status))

    def top_depth(self) -> int | None:
        """Shallowest depth holding an admissible block, or None."""
        for depth in range(self.tree.n_levels):
            if np.any(self.status[depth] == ADMISSIBLE):
                return depth
        return None

    def lookup(self, depth: int, s, t) -> np.ndarray:
        """Status of pairs ``(s, t)`` at ``depth``; -1 where the pair is not a node."""
        keys = self._keys[depth]
        q = np.asarray(s) * self.tree.n_nodes(depth) + np.asarray(t)
        out = np.full(np.shape(q), -1, dtype=np.int64)
        if len(keys) == 0:
            return out
        pos = np.minimum(np.searchsorted(keys, q), len(keys) - 1)
        found = keys[pos] == q
        out[found] = self.status[depth][pos[found]]
        return out

    def locate(self, i, j):
        """Covering leaf for tree-ordered entries ``(i, j)``.

        Returns arrays ``(depth, s, t, status)``, one entry per input pair.
        """
        i = np.atleast_1d(np.asarray(i, dtype=np.int64))
        j = np.atleast_1d(np.asarray(j, dtype=np.int64))
        depth_out = np.full(i.shape, -1, dtype=np.int64)
        s_out = np.empty_like(depth_out)
        t_out = np.empty_like(depth_out)
        st_out = np.empty_like(depth_out)
        pending = np.arange(i.size)
        for depth in range(self.tree.n_levels):
            if pending.size == 0:
                break
            s = self.tree.cluster_of(depth, i[pending])
            t = self.tree.cluster_of(depth, j[pending])
            st = self.lookup(depth, s, t)
            done = st > INNER
            hit = pending[done]
            depth_out[hit] = depth
            s_out[hit], t_out[hit], st_out[hit] = s[done], t[done], st[done]
            pending = pending[~done]
        if pending.size:
            raise RuntimeError("matrix tree does not cover every entry")
        return depth_out, s_out, t_out, st_out

    def leaf_area(self) -> int:
        sizes = [self.tree.sizes(k) for k in range(self.tree.n_levels)]
        total = 0
        for depth, (p, st) in enumerate(zip(self.pairs, self.status)):
            leaf = p[st != INNER]
            total += int(np.sum(sizes[depth][leaf[:, 0]] * sizes[depth][leaf[:, 1]]))
        return total


def build_matrix_tree(tree: ClusterTree, eta: float, metric: str = "center") -> MatrixTree:
    return MatrixTree(tree, eta, metric)


def sparsity_constant(mt: MatrixTree) -> int:
    """Largest number of leaf blocks in one block row of one level."""
    best = 0
    for depth, (p, st) in enumerate(zip(mt.pairs, mt.status)):
        rows = p[st != INNER, 0]
        if rows.size:
            best = max(best, int(np.bincount(rows).max()))
    return best
