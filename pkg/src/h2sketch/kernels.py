"""Kernel functions and batched entry evaluation.

Evaluators work on tree-ordered indices.  ``OriginalOrder`` wraps one for
callers holding indices in the original point ordering.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np
from scipy.spatial.distance import cdist


@dataclass(frozen=True)
class ExponentialCovariance:
    correlation_length: float = 0.2

    def __post_init__(self):
        if not (np.isfinite(self.correlation_length) and self.correlation_length > 0):
            raise ValueError("correlation_length must be positive and finite")

    def __call__(self, r):
        return np.exp(-r / self.correlation_length)


@dataclass(frozen=True)
class HelmholtzIE:
    """``cos(k r) / r`` with the diagonal (``r == 0``) set to zero."""

    wavenumber: float = 3.0

    def __post_init__(self):
        if not (np.isfinite(self.wavenumber) and self.wavenumber > 0):
            raise ValueError("wavenumber must be positive and finite")

    def __call__(self, r):
        r = np.asarray(r, dtype=np.float64)
        out = np.zeros_like(r)
        nz = r > 0
        out[nz] = np.cos(self.wavenumber * r[nz]) / r[nz]
        return out


KernelSpec = ExponentialCovariance | HelmholtzIE


def pairwise_distances(x, y):
    """Euclidean distances between rows of ``x`` (m, dim) and ``y`` (n, dim).

    Each entry is computed independently of the block it sits in, so single
    entries and whole blocks agree bit for bit.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1, np.shape(x)[-1])
    y = np.asarray(y, dtype=np.float64).reshape(-1, np.shape(y)[-1])
    return cdist(x, y)


def eval_entry(spec: KernelSpec, x, y) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    return float(spec(pairwise_distances(x[None, :], y[None, :]))[0, 0])


class EntryEvaluator(Protocol):
    n: int

    def eval_blocks(self, requests: Sequence[tuple]) -> list[np.ndarray]: ...


def _check_request(k, rows, cols, n):
    for idx in (rows, cols):
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise IndexError(f"request {k} has indices outside [0, {n})")


def as_index(idx) -> np.ndarray:
    return np.atleast_1d(np.asarray(idx, dtype=np.int64))


class KernelEvaluator:
    """Entries of ``K[i, j] = kernel(|x_i - x_j|)`` over tree-ordered points."""

    def __init__(self, coords, spec: KernelSpec):
        self.coords = np.asarray(coords, dtype=np.float64)
        if self.coords.ndim == 1:
            self.coords = self.coords[:, None]
        self.spec = spec
        self.n = self.coords.shape[0]

    def block(self, rows, cols) -> np.ndarray:
        return self.eval_blocks([(rows, cols)])[0]

    def eval_blocks(self, requests) -> list[np.ndarray]:
        out = []
        for k, (r, c) in enumerate(requests):
            r, c = as_index(r), as_index(c)
            _check_request(k, r, c, self.n)
            if r.size == 0 or c.size == 0:
                out.append(np.zeros((r.size, c.size)))
            else:
                out.append(self.spec(pairwise_distances(self.coords[r], self.coords[c])))
        return out


class DenseEvaluator:
    """Entries of an explicit matrix (already in tree ordering)."""

    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=np.float64)
        self.n = self.matrix.shape[0]

    def block(self, rows, cols):
        return self.eval_blocks([(rows, cols)])[0]

    def eval_blocks(self, requests):
        out = []
        for k, (r, c) in enumerate(requests):
            r, c = as_index(r), as_index(c)
            _check_request(k, r, c, self.n)
            out.append(self.matrix[np.ix_(r, c)])
        return out


class OriginalOrder:
    """Adapter exposing a tree-ordered evaluator through original indices."""

    def __init__(self, evaluator, tree):
        self.evaluator = evaluator
        self.tree = tree
        self.n = evaluator.n

    def eval_blocks(self, requests):
        return self.evaluator.eval_blocks(
            [(self.tree.to_tree(as_index(r)), self.tree.to_tree(as_index(c))) for r, c in requests]
        )


def generate_blocks(ev, requests) -> list[np.ndarray]:
    return ev.eval_blocks(list(requests))


def kernel_matrix(coords, spec: KernelSpec, rows_per_chunk: int = 512) -> np.ndarray:
    """Full dense kernel matrix, filled in row chunks."""
    coords = np.asarray(coords, dtype=np.float64)
    n = coords.shape[0]
    out = np.empty((n, n))
    for b in range(0, n, rows_per_chunk):
        out[b : b + rows_per_chunk] = spec(pairwise_distances(coords[b : b + rows_per_chunk], coords))
    return out
