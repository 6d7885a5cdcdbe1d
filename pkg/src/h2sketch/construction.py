"""Bottom-up sketching construction of H2 matrices.

The operator is only touched through ``sampler.apply`` (products with random
blocks) and ``evaluator.eval_blocks`` (a handful of explicit entries).  Each
level of the cluster tree, from the leaves up, goes through the same steps:

1. form local samples: remove from the sketch every contribution already
   represented explicitly (dense leaves at the bottom, couplings of the
   children above),
2. (adaptive mode) check every node's samples with a pivoted QR and, while
   some node is not converged, draw more random vectors and push them up
   through all completed levels,
3. row-ID the local samples to pick skeleton rows and the interpolation
   matrix (a leaf basis or a pair of transfer matrices),
4. shrink the samples to the skeleton rows and project the random vectors,
5. evaluate the couplings between skeletons of admissible pairs.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field

import numpy as np

from .cluster import MatrixTree
from .dense import is_converged, row_id
from .h2matrix import CouplingLevel, H2Matrix, NearField
from .samplers import DEFAULT_POWER_ITERS, estimate_operator_norm

PHASES = ("rand", "sample", "bsr_subtract", "convergence", "id", "shrink", "gen", "misc")


class ConstructionError(RuntimeError):
    def __init__(self, message, level=None):
        super().__init__(message)
        self.level = level


@dataclass
class ConstructionConfig:
    eps: float = 1e-6
    sample_block: int = 32
    adaptive: bool = True
    max_samples: int = 1024
    rank: int | None = None
    oversampling: int = 10
    eta: float = 0.7
    leaf_size: int = 64
    seed: int = 0
    norm: float | None = None
    norm_method: str = "power"
    norm_iters: int = DEFAULT_POWER_ITERS
    workers: int = 1

    def __post_init__(self):
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        if self.sample_block < 1:
            raise ValueError("sample_block must be at least 1")
        if self.max_samples < self.sample_block:
            raise ValueError("max_samples must be at least sample_block")
        if self.norm_method not in ("power", "sketch"):
            raise ValueError("norm_method must be 'power' or 'sketch'")

    @property
    def initial_samples(self) -> int:
        if self.adaptive or self.rank is None:
            return self.sample_block
        return self.rank + self.oversampling


@dataclass
class ConstructionStats:
    n: int = 0
    total_samples: int = 0
    norm_estimate: float = 0.0
    tol_abs: float = 0.0
    rank_min: dict = field(default_factory=dict)
    rank_max: dict = field(default_factory=dict)
    rounds: dict = field(default_factory=dict)
    timings_ms: dict = field(default_factory=lambda: {p: 0.0 for p in PHASES})
    total_ms: float = 0.0

    def to_dict(self, timings: bool = True) -> dict:
        d = asdict(self)
        for key in ("rank_min", "rank_max", "rounds"):
            d[key] = {str(k): v for k, v in sorted(d[key].items())}
        if not timings:
            d.pop("timings_ms")
            d.pop("total_ms")
        return d

    def to_json(self, timings: bool = True) -> str:
        return json.dumps(self.to_dict(timings), indent=2, sort_keys=True)

    def leaf_rank_range(self) -> tuple[int, int]:
        return self.rank_min.get(1, 0), self.rank_max.get(1, 0)


def gaussian_block(seed: int, round_: int, n: int, d: int) -> np.ndarray:
    """Standard normal (n, d) block from a counter-based stream keyed on (seed, round)."""
    bitgen = np.random.Philox(key=np.array([seed, round_], dtype=np.uint64))
    return np.random.Generator(bitgen).standard_normal((n, d))


def sketch_norm(omega, y) -> float:
    """Lower estimate of ``||K||_2`` from one sketch ``y = K omega``."""
    if omega.size == 0:
        return 0.0
    top = np.linalg.norm(y, 2)
    return float(top / np.linalg.norm(omega, 2)) if top > 0 else 0.0


def subtract_far_contributions(y, blocks, omega):
    """``y - sum_b block_b @ omega_b`` with partners accumulated in the given order.

    ``blocks`` and ``omega`` are parallel lists; an empty list leaves ``y``
    unchanged.
    """
    out = np.array(y, dtype=np.float64, copy=True)
    for blk, om in zip(blocks, omega):
        if blk.shape[1] != om.shape[0]:
            raise ValueError(f"block of shape {blk.shape} cannot act on {om.shape[0]} rows")
        out -= blk @ om
    return out


class _Builder:
    def __init__(self, sampler, evaluator, mtree: MatrixTree, cfg: ConstructionConfig):
        self.sampler = sampler
        self.evaluator = evaluator
        self.mt = mtree
        self.tree = mtree.tree
        self.cfg = cfg
        self.stats = ConstructionStats(n=self.tree.n)
        L = self.tree.n_levels
        self.top = mtree.top_depth()
        self.interp = [[] for _ in range(L)]
        self.skel_local = [[] for _ in range(L)]
        self.skeletons = [[] for _ in range(L)]
        self.couplings = [None] * L
        self.round = 0
        self.pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None

    @contextmanager
    def phase(self, name):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.stats.timings_ms[name] += 1e3 * (time.perf_counter() - t0)

    def map(self, fn, items):
        if self.pool is None:
            return [fn(x) for x in items]
        return list(self.pool.map(fn, items))

    def draw(self, d):
        with self.phase("rand"):
            omega = gaussian_block(self.cfg.seed, self.round, self.tree.n, d)
        with self.phase("sample"):
            y = np.asarray(self.sampler.apply(omega), dtype=np.float64)
        if y.shape != omega.shape:
            raise ConstructionError(f"sampler returned shape {y.shape}, expected {omega.shape}")
        if not np.all(np.isfinite(y)):
            raise ConstructionError("sampler returned non-finite values")
        self.round += 1
        return omega, y

    # local samples -----------------------------------------------------

    def leaf_samples(self, omega, y):
        leaf = self.tree.leaf_depth
        with self.phase("bsr_subtract"):
            yloc = y - self.near.apply(omega)
        b, e = self.tree.begin[leaf], self.tree.end[leaf]
        return [omega[b[s] : e[s]] for s in range(len(b))], [yloc[b[s] : e[s]] for s in range(len(b))]

    def inner_samples(self, depth, omega_child, y_child):
        """Merge children (at ``depth + 1``) and remove their coupling terms."""
        child = depth + 1
        with self.phase("bsr_subtract"):
            d = omega_child[0].shape[1] if omega_child else 0
            stacked = np.concatenate(omega_child) if omega_child else np.zeros((0, d))
            level = self.couplings[child]
            yhat = level.apply(stacked)
            off = level.offsets
            yc = [yv - yhat[off[c] : off[c + 1]] for c, yv in enumerate(y_child)]
        omega = [np.vstack([omega_child[2 * s], omega_child[2 * s + 1]]) for s in range(len(y_child) // 2)]
        yloc = [np.vstack([yc[2 * s], yc[2 * s + 1]]) for s in range(len(y_child) // 2)]
        return omega, yloc

    def shrink(self, depth, omega, yloc):
        with self.phase("shrink"):
            om = [w.T @ o for w, o in zip(self.interp[depth], omega)]
            yn = [yv[j] for j, yv in zip(self.skel_local[depth], yloc)]
        return om, yn

    def samples_at(self, depth, omega, y):
        """Sweep fresh global samples up to ``depth`` through completed levels."""
        om, yl = self.leaf_samples(omega, y)
        k = self.tree.leaf_depth
        while k > depth:
            om, yl = self.shrink(k, om, yl)
            k -= 1
            om, yl = self.inner_samples(k, om, yl)
        return om, yl

    # adaptivity ----------------------------------------------------------

    def converged(self, yloc, d):
        tol = self.tol

        def check(yv):
            return yv.shape[0] < d or is_converged(yv, tol)

        with self.phase("convergence"):
            return self.map(check, yloc)

    def refine(self, depth, omega, yloc, d):
        level = self.tree.level(depth)
        rounds = 0
        while not all(self.converged(yloc, d)):
            if d + self.cfg.sample_block > self.cfg.max_samples:
                raise ConstructionError(
                    f"sampling did not converge at level {level} within {self.cfg.max_samples} samples",
                    level=level,
                )
            new_omega, new_y = self.draw(self.cfg.sample_block)
            om, yl = self.samples_at(depth, new_omega, new_y)
            with self.phase("misc"):
                omega = [np.hstack([a, b]) for a, b in zip(omega, om)]
                yloc = [np.hstack([a, b]) for a, b in zip(yloc, yl)]
            d += self.cfg.sample_block
            rounds += 1
        self.stats.rounds[level] = rounds
        return omega, yloc, d

    # skeletonization -----------------------------------------------------

    def skeletonize(self, depth, yloc):
        tol = self.tol
        with self.phase("id"):
            ids = self.map(lambda yv: row_id(yv, tol), yloc)
        tree = self.tree
        for s, idr in enumerate(ids):
            self.interp[depth].append(idr.interp)
            self.skel_local[depth].append(idr.skeleton)
            if depth == tree.leaf_depth:
                cand = np.arange(tree.begin[depth][s], tree.end[depth][s])
            else:
                cand = np.concatenate([self.skeletons[depth + 1][2 * s], self.skeletons[depth + 1][2 * s + 1]])
            self.skeletons[depth].append(cand[idr.skeleton])
        ranks = np.array([s.size for s in self.skeletons[depth]], dtype=np.int64)
        level = tree.level(depth)
        self.stats.rank_min[level] = int(ranks.min()) if ranks.size else 0
        self.stats.rank_max[level] = int(ranks.max()) if ranks.size else 0

    def generate_couplings(self, depth):
        skel = self.skeletons[depth]
        requests = CouplingLevel.requests(self.mt, depth, skel)
        with self.phase("gen"):
            panels = self.evaluator.eval_blocks(requests)
        self.couplings[depth] = CouplingLevel(self.mt, depth, [s.size for s in skel], panels)

    # driver --------------------------------------------------------------

    def run(self):
        cfg, tree = self.cfg, self.tree
        t_start = time.perf_counter()
        leaf = tree.leaf_depth

        d = cfg.initial_samples if self.top is not None else 0
        if d:
            omega, y = self.draw(d)

        with self.phase("misc"):
            if cfg.norm is not None:
                norm = float(cfg.norm)
            elif cfg.norm_method == "sketch" and d:
                norm = sketch_norm(omega, y)
            else:
                norm = estimate_operator_norm(self.sampler, cfg.norm_iters, cfg.seed)
        self.tol = cfg.eps * norm
        self.stats.norm_estimate = norm
        self.stats.tol_abs = self.tol

        with self.phase("gen"):
            panels = self.evaluator.eval_blocks(NearField.requests(tree, self.mt))
        self.near = NearField(tree, self.mt, panels)

        if d:
            om, yl = self.leaf_samples(omega, y)
            del omega, y
            for depth in range(leaf, self.top - 1, -1):
                if depth < leaf:
                    om, yl = self.inner_samples(depth, om, yl)
                if cfg.adaptive:
                    om, yl, d = self.refine(depth, om, yl, d)
                else:
                    self.stats.rounds[tree.level(depth)] = 0
                self.skeletonize(depth, yl)
                self.generate_couplings(depth)
                if depth > self.top:
                    om, yl = self.shrink(depth, om, yl)

        if self.pool is not None:
            self.pool.shutdown()
        self.stats.total_samples = d
        h2 = self.assemble()
        self.stats.total_ms = 1e3 * (time.perf_counter() - t_start)
        return h2, self.stats

    def assemble(self) -> H2Matrix:
        tree, L = self.tree, self.tree.n_levels
        if self.top is None:
            return H2Matrix(tree, self.mt, None, self.near)
        E = [[] for _ in range(L)]
        for depth in range(self.top, tree.leaf_depth):
            ranks = [s.size for s in self.skeletons[depth + 1]]
            for s, w in enumerate(self.interp[depth]):
                r1 = ranks[2 * s]
                E[depth + 1] += [w[:r1], w[r1:]]
        return H2Matrix(
            tree=tree,
            mtree=self.mt,
            top_depth=self.top,
            near=self.near,
            U=list(self.interp[tree.leaf_depth]),
            E=E,
            skeletons=self.skeletons,
            couplings=self.couplings,
        )


def construct(sampler, evaluator, mtree: MatrixTree, cfg: ConstructionConfig | None = None):
    """Build an H2 matrix from a sampler and an entry evaluator.

    Returns ``(h2, stats)``.  Raises :class:`ConstructionError` when adaptive
    sampling exceeds ``cfg.max_samples`` or the sampler returns non-finite
    values.
    """
    cfg = cfg or ConstructionConfig()
    if sampler.n != mtree.tree.n or evaluator.n != mtree.tree.n:
        raise ValueError("sampler, evaluator and tree disagree on the dimension")
    return _Builder(sampler, evaluator, mtree, cfg).run()
