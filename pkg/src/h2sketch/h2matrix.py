"""H2 matrix storage, products and entry extraction.

Bases are stored per cluster from the leaves up to ``top_depth``, the
shallowest depth holding an admissible block: explicit ``U`` at the leaves
and transfer matrices ``E`` for every cluster below ``top_depth``, mapping a
cluster's skeleton space to its parent's.  Couplings and dense leaves are
both stored once per unordered pair (see :class:`CouplingLevel` and
:class:`NearField`); the transposed block is implied by symmetry.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cluster import ADMISSIBLE, DENSE, ClusterTree, MatrixTree

WORD = 8
DENSE_GUARD = 16384


def _as_block(x, n):
    x = np.asarray(x, dtype=np.float64)
    vec = x.ndim == 1
    if vec:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] != n:
        raise ValueError(f"expected {n} rows, got shape {np.shape(x)}")
    return x, vec


def ranges_index(begin, end) -> np.ndarray:
    """Concatenation of ``arange(b, e)`` for paired ``begin``/``end`` arrays."""
    begin = np.asarray(begin, dtype=np.int64)
    end = np.asarray(end, dtype=np.int64)
    lens = end - begin
    if lens.sum() == 0:
        return np.zeros(0, dtype=np.int64)
    starts = np.repeat(begin - np.concatenate([[0], np.cumsum(lens)[:-1]]), lens)
    return starts + np.arange(lens.sum())


class NearField:
    """Dense leaves stored once per unordered pair.

    ``panels[s]`` is ``[D_{s,t} for t in near(s) if t >= s]`` side by side.
    The diagonal pair is always present (a cluster is never admissible with
    itself) and comes first.
    """

    def __init__(self, tree: ClusterTree, mtree: MatrixTree, panels: list[np.ndarray]):
        self.tree = tree
        leaf = tree.leaf_depth
        self.begin = tree.begin[leaf]
        self.end = tree.end[leaf]
        self.partners = []
        self.cols = []
        self.offsets = []
        for s in range(tree.n_nodes(leaf)):
            p = mtree.near_partners(s)
            p = p[p >= s]
            self.partners.append(p)
            self.cols.append(ranges_index(self.begin[p], self.end[p]))
            sizes = self.end[p] - self.begin[p]
            self.offsets.append(np.concatenate([[0], np.cumsum(sizes)]))
        self.panels = panels
        self._where = {}
        for s, p in enumerate(self.partners):
            for k, t in enumerate(p):
                self._where[(s, int(t))] = k

    @classmethod
    def requests(cls, tree: ClusterTree, mtree: MatrixTree):
        """Per leaf, the (rows, cols) request for its stored upper panel."""
        leaf = tree.leaf_depth
        b, e = tree.begin[leaf], tree.end[leaf]
        out = []
        for s in range(tree.n_nodes(leaf)):
            p = mtree.near_partners(s)
            p = p[p >= s]
            out.append((np.arange(b[s], e[s]), ranges_index(b[p], e[p])))
        return out

    def block(self, s: int, t: int) -> np.ndarray:
        if s > t:
            return self.block(t, s).T
        k = self._where[(s, t)]
        o = self.offsets[s]
        return self.panels[s][:, o[k] : o[k + 1]]

    def apply(self, x):
        """``y = D x`` summed over every dense leaf (both orientations)."""
        y = np.zeros_like(x)
        for s, panel in enumerate(self.panels):
            if panel.size == 0:
                continue
            b, e = self.begin[s], self.end[s]
            y[b:e] += panel @ x[self.cols[s]]
            o = self.offsets[s]
            if len(self.partners[s]) > 1:
                z = panel[:, o[1] :].T @ x[b:e]
                for k in range(1, len(self.partners[s])):
                    t = self.partners[s][k]
                    y[self.begin[t] : self.end[t]] += z[o[k] - o[1] : o[k + 1] - o[1]]
        return y

    def entry(self, s, t, i, j):
        """Entries ``(i, j)`` (tree indices) inside dense leaf ``(s, t)``."""
        if s > t:
            s, t, i, j = t, s, j, i
        k = self._where[(s, t)]
        return self.panels[s][i - self.begin[s], self.offsets[s][k] + j - self.begin[t]]

    def n_reals(self) -> int:
        return int(sum(p.size for p in self.panels))


class CouplingLevel:
    """Couplings of one depth, stored once per unordered admissible pair.

    ``panels[s]`` is ``[B_{s,t} for t in far(s) if t > s]`` side by side, with
    ``B_{s,t}`` of shape ``rank[s] x rank[t]``.  ``offsets`` gives each
    cluster's slice in the stacked skeleton-space layout used by :meth:`apply`.
    """

    def __init__(self, mtree: MatrixTree, depth: int, ranks, panels: list[np.ndarray]):
        ranks = np.asarray(ranks, dtype=np.int64)
        self.depth = depth
        self.ranks = ranks
        self.offsets = np.concatenate([[0], np.cumsum(ranks)])
        self.partners = []
        self.gather = []
        self.col_offsets = []
        for s in range(ranks.size):
            p = mtree.far_partners(depth, s)
            p = p[p > s]
            self.partners.append(p)
            self.gather.append(ranges_index(self.offsets[p], self.offsets[p + 1]))
            self.col_offsets.append(np.concatenate([[0], np.cumsum(ranks[p])]))
        self.panels = panels

    @staticmethod
    def requests(mtree: MatrixTree, depth: int, skeletons):
        """Per cluster, the (rows, cols) skeleton request for its stored panel."""
        out = []
        for s, rows in enumerate(skeletons):
            p = mtree.far_partners(depth, s)
            p = p[p > s]
            cols = np.concatenate([skeletons[t] for t in p]) if p.size else np.zeros(0, dtype=np.int64)
            out.append((rows, cols))
        return out

    def block(self, s: int, t: int) -> np.ndarray:
        if s > t:
            return self.block(t, s).T
        p = self.partners[s]
        k = int(np.searchsorted(p, t))
        if k >= p.size or p[k] != t:
            raise KeyError(f"({s}, {t}) is not an admissible pair at depth {self.depth}")
        o = self.col_offsets[s]
        return self.panels[s][:, o[k] : o[k + 1]]

    def apply(self, xhat):
        """``yhat_s = sum_t B_{s,t} xhat_t`` over all admissible partners, stacked.

        Contributions are accumulated in ascending ``s`` order, so the result
        does not depend on how callers schedule other work.
        """
        yhat = np.zeros((self.offsets[-1], xhat.shape[1]))
        off = self.offsets
        for s, panel in enumerate(self.panels):
            if panel.size == 0:
                continue
            g = self.gather[s]
            yhat[off[s] : off[s + 1]] += panel @ xhat[g]
            yhat[g] += panel.T @ xhat[off[s] : off[s + 1]]
        return yhat

    def n_reals(self) -> int:
        return int(sum(p.size for p in self.panels))


@dataclass
class H2Matrix:
    """Symmetric H2 matrix on tree-ordered indices.

    Per-depth lists are indexed by absolute depth; entries above
    ``top_depth`` are empty.
    """

    tree: ClusterTree
    mtree: MatrixTree
    top_depth: int | None
    near: NearField
    U: list[np.ndarray] = field(default_factory=list)
    E: list[list[np.ndarray]] = field(default_factory=list)
    skeletons: list[list[np.ndarray]] = field(default_factory=list)
    couplings: list[CouplingLevel | None] = field(default_factory=list)

    def __post_init__(self):
        L = self.tree.n_levels
        self.ranks = [np.zeros(0, dtype=np.int64) for _ in range(L)]
        self._hat_offsets = [None] * L
        if self.top_depth is None:
            return
        for k in range(self.top_depth, L):
            r = np.array([s.size for s in self.skeletons[k]], dtype=np.int64)
            self.ranks[k] = r
            self._hat_offsets[k] = np.concatenate([[0], np.cumsum(r)])

    @property
    def n(self) -> int:
        return self.tree.n

    @property
    def shape(self):
        return (self.n, self.n)

    def coupling(self, depth: int, s: int, t: int) -> np.ndarray:
        if self.top_depth is None or depth < self.top_depth:
            raise KeyError(f"no couplings stored at depth {depth}")
        return self.couplings[depth].block(s, t)

    def matvec(self, x):
        """Product with a vector or an (n, d) block of vectors."""
        x, vec = _as_block(x, self.n)
        y = self.near.apply(x)
        if self.top_depth is not None:
            y += self._far_apply(x)
        return y[:, 0] if vec else y

    apply = matvec

    def __matmul__(self, x):
        return self.matvec(x)

    def _far_apply(self, x):
        tree, top, leaf = self.tree, self.top_depth, self.tree.leaf_depth
        d = x.shape[1]
        xhat = [None] * tree.n_levels
        b, e = tree.begin[leaf], tree.end[leaf]
        xhat[leaf] = np.concatenate([self.U[s].T @ x[b[s] : e[s]] for s in range(len(self.U))] or [np.zeros((0, d))])
        for k in range(leaf - 1, top - 1, -1):
            off = self._hat_offsets[k + 1]
            parts = []
            for s in range(tree.n_nodes(k)):
                c1, c2 = 2 * s, 2 * s + 1
                parts.append(
                    self.E[k + 1][c1].T @ xhat[k + 1][off[c1] : off[c1 + 1]]
                    + self.E[k + 1][c2].T @ xhat[k + 1][off[c2] : off[c2 + 1]]
                )
            xhat[k] = np.concatenate(parts) if parts else np.zeros((0, d))

        yhat = [None] * tree.n_levels
        for k in range(top, leaf + 1):
            off = self._hat_offsets[k]
            yk = self.couplings[k].apply(xhat[k])
            if k > top:
                poff = self._hat_offsets[k - 1]
                for c in range(tree.n_nodes(k)):
                    p = c // 2
                    yk[off[c] : off[c + 1]] += self.E[k][c] @ yhat[k - 1][poff[p] : poff[p + 1]]
            yhat[k] = yk

        y = np.zeros_like(x)
        off = self._hat_offsets[leaf]
        for s in range(len(self.U)):
            y[b[s] : e[s]] = self.U[s] @ yhat[leaf][off[s] : off[s + 1]]
        return y

    def expand_basis(self, depth: int, s: int) -> np.ndarray:
        """Explicit basis of cluster ``s`` (size x rank) via the nested form."""
        if self.top_depth is None or depth < self.top_depth:
            raise ValueError(f"no basis stored at depth {depth}")
        if depth == self.tree.leaf_depth:
            return self.U[s]
        c1, c2 = 2 * s, 2 * s + 1
        return np.vstack(
            [
                self.expand_basis(depth + 1, c1) @ self.E[depth + 1][c1],
                self.expand_basis(depth + 1, c2) @ self.E[depth + 1][c2],
            ]
        )

    def basis_rows(self, depth: int, s: int, idx, memo=None) -> np.ndarray:
        """Rows ``idx`` (tree indices inside ``s``) of the expanded basis."""
        idx = np.asarray(idx, dtype=np.int64)
        key = (depth, s, idx.tobytes())
        if memo is not None and key in memo:
            return memo[key]
        if depth == self.tree.leaf_depth:
            rows = self.U[s][idx - self.tree.begin[depth][s]]
        else:
            c1, c2 = 2 * s, 2 * s + 1
            split = self.tree.begin[depth + 1][c2]
            rows = np.empty((idx.size, self.ranks[depth][s]))
            lo = idx < split
            if lo.any():
                rows[lo] = self.basis_rows(depth + 1, c1, idx[lo], memo) @ self.E[depth + 1][c1]
            if (~lo).any():
                rows[~lo] = self.basis_rows(depth + 1, c2, idx[~lo], memo) @ self.E[depth + 1][c2]
        if memo is not None:
            memo[key] = rows
        return rows

    def entries(self, i, j, memo=None) -> np.ndarray:
        """Entries at tree-ordered positions ``(i[k], j[k])``."""
        i = np.atleast_1d(np.asarray(i, dtype=np.int64))
        j = np.atleast_1d(np.asarray(j, dtype=np.int64))
        if i.shape != j.shape:
            raise ValueError("row and column index arrays differ in shape")
        for idx in (i, j):
            if idx.size and (idx.min() < 0 or idx.max() >= self.n):
                raise IndexError(f"indices outside [0, {self.n})")
        out = np.empty(i.shape, dtype=np.float64)
        if i.size == 0:
            return out
        memo = {} if memo is None else memo
        depth, s, t, status = self.mtree.locate(i, j)
        groups = np.stack([depth, s, t, status], axis=1)
        uniq, inv = np.unique(groups, axis=0, return_inverse=True)
        inv = inv.ravel()
        order = np.argsort(inv, kind="stable")
        bounds = np.concatenate([[0], np.cumsum(np.bincount(inv, minlength=len(uniq)))])
        for g, (k, sg, tg, st) in enumerate(uniq):
            sel = order[bounds[g] : bounds[g + 1]]
            if st == DENSE:
                out[sel] = self.near.entry(int(sg), int(tg), i[sel], j[sel])
            elif st == ADMISSIBLE:
                rs = self.basis_rows(int(k), int(sg), i[sel], memo)
                rt = self.basis_rows(int(k), int(tg), j[sel], memo)
                out[sel] = np.einsum("ij,ij->i", rs @ self.coupling(int(k), int(sg), int(tg)), rt)
        return out

    def to_dense(self, guard: int = DENSE_GUARD) -> np.ndarray:
        if self.n > guard:
            raise ValueError(f"n = {self.n} exceeds the dense guard {guard}")
        tree = self.tree
        out = np.zeros((self.n, self.n))
        leaf = tree.leaf_depth
        b, e = tree.begin[leaf], tree.end[leaf]
        for s, t in self.mtree.dense_pairs():
            out[b[s] : e[s], b[t] : e[t]] = self.near.block(int(s), int(t))
        if self.top_depth is None:
            return out
        for k in range(self.top_depth, tree.n_levels):
            bases = {}
            bk, ek = tree.begin[k], tree.end[k]
            for s, t in self.mtree.admissible_pairs(k):
                for c in (s, t):
                    if c not in bases:
                        bases[c] = self.expand_basis(k, int(c))
                out[bk[s] : ek[s], bk[t] : ek[t]] = bases[s] @ self.coupling(k, int(s), int(t)) @ bases[t].T
        return out

    def memory_report(self) -> dict:
        """Bytes held per category, plus the total."""
        reals = {
            "U": sum(u.size for u in self.U),
            "E": sum(m.size for level in self.E for m in level),
            "B": sum(c.n_reals() for c in self.couplings if c is not None),
            "D": self.near.n_reals(),
        }
        report = {k: int(v) * WORD for k, v in reals.items()}
        report["indices"] = int(sum(s.size for level in self.skeletons for s in level)) * WORD
        report["total"] = sum(report.values())
        return report

    def rank_range(self, depth: int | None = None) -> tuple[int, int]:
        depths = [depth] if depth is not None else range(self.top_depth or 0, self.tree.n_levels)
        r = np.concatenate([self.ranks[k] for k in depths]) if self.top_depth is not None else np.zeros(0)
        if r.size == 0:
            return (0, 0)
        return int(r.min()), int(r.max())


def extract_entries(m: H2Matrix, requests) -> list[np.ndarray]:
    """Dense blocks ``m[rows][:, cols]`` for each (rows, cols) request."""
    memo = {}
    out = []
    for rows, cols in requests:
        rows = np.atleast_1d(np.asarray(rows, dtype=np.int64))
        cols = np.atleast_1d(np.asarray(cols, dtype=np.int64))
        ii = np.repeat(rows, cols.size)
        jj = np.tile(cols, rows.size)
        out.append(m.entries(ii, jj, memo).reshape(rows.size, cols.size))
    return out


def to_dense(m: H2Matrix, guard: int = DENSE_GUARD) -> np.ndarray:
    return m.to_dense(guard)


def matvec(m: H2Matrix, x):
    return m.matvec(x)


def memory_report(m: H2Matrix) -> dict:
    return m.memory_report()
