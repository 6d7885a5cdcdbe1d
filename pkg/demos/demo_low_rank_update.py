"""
Recompressing an H2 matrix after a low-rank update
==================================================

An existing H2 matrix plus ``F @ F.T`` is again a black-box operator: its
products and entries are cheap, so the same construction rebuilds it.
"""

import numpy as np

from h2sketch import (
    ClusterTree,
    ConstructionConfig,
    DenseSampler,
    ExponentialCovariance,
    KernelEvaluator,
    LowRankUpdate,
    MatrixTree,
    construct,
    estimate_rel_error,
    generate_points,
    kernel_matrix,
    make_updated_evaluator,
    make_updated_sampler,
)

tree = ClusterTree(generate_points(4096, 3, "grid"), 64)
mt = MatrixTree(tree, 0.7)
spec = ExponentialCovariance(0.2)
K = kernel_matrix(tree.coords, spec)
base, base_stats = construct(DenseSampler(K), KernelEvaluator(tree.coords, spec), mt)

# a rank-32 update with norm comparable to the base operator
F = np.random.default_rng(0).standard_normal((4096, 32)) * np.sqrt(base_stats.norm_estimate / 4096)
up = LowRankUpdate(F)
updated, stats = construct(make_updated_sampler(base, up), make_updated_evaluator(base, up), mt, ConstructionConfig())

oracle = DenseSampler(base.to_dense() + F @ F.T)
print("base ranks", base.rank_range(), "-> updated ranks", updated.rank_range())
print("samples:", base_stats.total_samples, "->", stats.total_samples)
print("error of the recompressed operator:", estimate_rel_error(updated, oracle))
