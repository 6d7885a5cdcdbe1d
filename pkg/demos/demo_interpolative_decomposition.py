"""
Row interpolative decomposition
===============================

The construction picks skeleton rows of a sample block with a pivoted QR:
``A ~= W @ A[J]`` where ``W[J]`` is the identity.
"""

import numpy as np

from h2sketch import column_pivoted_qr, row_id

rng = np.random.default_rng(0)

# a 20 x 12 matrix with singular values 1, 0.1, ..., 1e-11
u, _ = np.linalg.qr(rng.standard_normal((20, 12)))
v, _ = np.linalg.qr(rng.standard_normal((12, 12)))
a = (u * 10.0 ** -np.arange(12)) @ v.T

_, diag, _, _ = column_pivoted_qr(a.T)
print("pivoted R diagonal:", np.array2string(diag, precision=1))

for tol in (1e-2, 1e-6, 1e-10):
    res = row_id(a, tol)
    err = np.linalg.norm(a - res.interp @ a[res.skeleton], 2)
    print(f"tol={tol:.0e}: rank {res.rank}, skeleton {sorted(res.skeleton.tolist())}, error {err:.1e}")
