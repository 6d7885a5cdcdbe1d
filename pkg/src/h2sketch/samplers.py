"""Black-box operators (samplers), low-rank updates and power-method norms."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .h2matrix import H2Matrix, _as_block, extract_entries
from .kernels import KernelSpec, as_index, pairwise_distances

DEFAULT_POWER_ITERS = 10


class Sampler(Protocol):
    n: int

    def apply(self, x: np.ndarray) -> np.ndarray: ...


class DenseSampler:
    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=np.float64)
        self.n = self.matrix.shape[0]

    def apply(self, x):
        x, vec = _as_block(x, self.n)
        y = self.matrix @ x
        return y[:, 0] if vec else y


class KernelSampler:
    """Exact kernel products without storing the matrix (O(n^2) per call)."""

    def __init__(self, coords, spec: KernelSpec, rows_per_chunk: int = 256):
        self.coords = np.asarray(coords, dtype=np.float64)
        self.spec = spec
        self.n = self.coords.shape[0]
        self.rows_per_chunk = rows_per_chunk

    def apply(self, x):
        x, vec = _as_block(x, self.n)
        y = np.empty_like(x)
        for b in range(0, self.n, self.rows_per_chunk):
            k = self.spec(pairwise_distances(self.coords[b : b + self.rows_per_chunk], self.coords))
            y[b : b + self.rows_per_chunk] = k @ x
        return y[:, 0] if vec else y


@dataclass
class LowRankUpdate:
    """Symmetric update ``factor @ factor.T``."""

    factor: np.ndarray

    def __post_init__(self):
        self.factor = np.asarray(self.factor, dtype=np.float64)
        if self.factor.ndim != 2:
            raise ValueError("factor must be an (n, p) array")
        if not np.all(np.isfinite(self.factor)):
            raise ValueError("factor has non-finite entries")

    @property
    def n(self) -> int:
        return self.factor.shape[0]

    def apply(self, x):
        return self.factor @ (self.factor.T @ x)


class UpdatedSampler:
    def __init__(self, base, update: LowRankUpdate):
        if base.n != update.n:
            raise ValueError(f"dimension mismatch: {base.n} vs {update.n}")
        self.base = base
        self.update = update
        self.n = base.n

    def apply(self, x):
        x, vec = _as_block(x, self.n)
        y = self.base.apply(x) + self.update.apply(x)
        return y[:, 0] if vec else y


class H2Evaluator:
    """Entry evaluator backed by an existing H2 matrix."""

    def __init__(self, m: H2Matrix):
        self.m = m
        self.n = m.n

    def eval_blocks(self, requests):
        return extract_entries(self.m, requests)


class UpdatedEvaluator:
    def __init__(self, base, update: LowRankUpdate):
        if base.n != update.n:
            raise ValueError(f"dimension mismatch: {base.n} vs {update.n}")
        self.base = base
        self.update = update
        self.n = base.n

    def eval_blocks(self, requests):
        requests = [(as_index(r), as_index(c)) for r, c in requests]
        blocks = self.base.eval_blocks(requests)
        f = self.update.factor
        return [blk + f[r] @ f[c].T for blk, (r, c) in zip(blocks, requests)]


def make_updated_sampler(m: H2Matrix, update: LowRankUpdate) -> UpdatedSampler:
    return UpdatedSampler(m, update)


def make_updated_evaluator(m: H2Matrix, update: LowRankUpdate) -> UpdatedEvaluator:
    return UpdatedEvaluator(H2Evaluator(m), update)


class Difference:
    def __init__(self, a, b):
        if a.n != b.n:
            raise ValueError(f"dimension mismatch: {a.n} vs {b.n}")
        self.a, self.b, self.n = a, b, a.n

    def apply(self, x):
        return self.a.apply(x) - self.b.apply(x)


def power_norm(op, iters: int = DEFAULT_POWER_ITERS, seed: int = 0) -> float:
    """Power-iteration estimate of the 2-norm of a symmetric operator."""
    if iters < 1:
        raise ValueError("iters must be at least 1")
    x = np.random.default_rng(seed).standard_normal((op.n, 1))
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iters):
        y = op.apply(x)
        est = float(np.linalg.norm(y))
        if est == 0.0:
            return 0.0
        x = y / est
    return est


def estimate_operator_norm(sampler, iters: int = DEFAULT_POWER_ITERS, seed: int = 0) -> float:
    return power_norm(sampler, iters, seed)


def estimate_rel_error(a, b, iters: int = DEFAULT_POWER_ITERS, seed: int = 0) -> float:
    """Estimate of ``||a - b||_2 / ||b||_2`` by power iteration on both."""
    diff = power_norm(Difference(a, b), iters, seed)
    ref = power_norm(b, iters, seed)
    if ref == 0.0:
        return 0.0 if diff == 0.0 else float("inf")
    return diff / ref
