"""Pivoted QR, interpolative decomposition and the sample convergence test."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


@dataclass
class IDResult:
    """Row interpolative decomposition ``A ~= interp @ A[skeleton]``.

    ``interp[skeleton]`` is exactly the identity.
    """

    skeleton: np.ndarray
    interp: np.ndarray

    @property
    def rank(self) -> int:
        return int(self.skeleton.size)


def column_pivoted_qr(a):
    """Householder QR with greedy column pivoting, ``a[:, piv] = q @ r``.

    Returns ``(piv, diag, q, r)`` where ``diag`` holds the non-increasing
    magnitudes of the diagonal of ``r``.
    """
    a = np.asarray(a, dtype=np.float64)
    m, n = a.shape
    if m == 0 or n == 0:
        return np.arange(n), np.zeros(0), np.zeros((m, min(m, n))), np.zeros((min(m, n), n))
    q, r, piv = scipy.linalg.qr(a, mode="economic", pivoting=True, check_finite=False)
    return piv, np.abs(np.diag(r)), q, r


def _pivoted_r(a):
    m, n = a.shape
    if m == 0 or n == 0:
        return np.zeros((0, n)), np.arange(n)
    r, piv = scipy.linalg.qr(a, mode="r", pivoting=True, check_finite=False)
    return r[: min(m, n)], piv


def row_id(a, tol_abs: float) -> IDResult:
    """Row ID via the column ID of ``a.T``.

    The rank is the number of leading pivoted diagonal entries of ``R``
    strictly above ``tol_abs``.
    """
    if tol_abs < 0:
        raise ValueError("tol_abs must be non-negative")
    a = np.asarray(a, dtype=np.float64)
    m = a.shape[0]
    r, piv = _pivoted_r(a.T)
    diag = np.abs(np.diag(r))
    below = np.nonzero(diag <= tol_abs)[0]
    k = int(below[0]) if below.size else diag.size
    interp = np.zeros((m, k))
    skel = piv[:k].copy()
    interp[skel, np.arange(k)] = 1.0
    if k and k < m:
        t = scipy.linalg.solve_triangular(r[:k, :k], r[:k, k:], check_finite=False)
        interp[piv[k:]] = t.T
    return IDResult(skeleton=skel, interp=interp)


def min_pivot(yloc) -> float:
    """Smallest pivoted-QR diagonal magnitude of the sample block ``yloc.T``."""
    yloc = np.asarray(yloc)
    if yloc.size == 0:
        return 0.0
    r, _ = _pivoted_r(yloc.T)
    return float(np.abs(np.diag(r)).min())


def is_converged(yloc, tol_abs: float) -> bool:
    """True when the samples already expose a numerically rank-deficient range.

    An exactly zero pivot counts as converged even for ``tol_abs == 0``.
    """
    smallest = min_pivot(yloc)
    return smallest < tol_abs or smallest == 0.0
