"""
Adaptive versus fixed sample counts
===================================

In adaptive mode the construction starts with 32 random vectors and draws
more only where a level's samples have not yet exposed the numerical rank.
A fixed run has to guess a sample count up front.
"""

from h2sketch import (
    ClusterTree,
    ConstructionConfig,
    DenseSampler,
    HelmholtzIE,
    KernelEvaluator,
    MatrixTree,
    construct,
    estimate_rel_error,
    generate_points,
    kernel_matrix,
)

tree = ClusterTree(generate_points(4096, 3, "grid"), 64)
mt = MatrixTree(tree, 0.7)
spec = HelmholtzIE(3.0)
K = kernel_matrix(tree.coords, spec)
sampler, evaluator = DenseSampler(K), KernelEvaluator(tree.coords, spec)

configs = {
    "adaptive, blocks of 32": ConstructionConfig(),
    "adaptive, blocks of 16": ConstructionConfig(sample_block=16),
    "fixed, 64 samples": ConstructionConfig(adaptive=False, rank=54, oversampling=10),
    "fixed, 128 samples": ConstructionConfig(adaptive=False, rank=118, oversampling=10),
}
for name, cfg in configs.items():
    h2, stats = construct(sampler, evaluator, mt, cfg)
    err = estimate_rel_error(h2, sampler)
    print(f"{name:24s} samples={stats.total_samples:4d} rounds={stats.rounds} error={err:.2e}")
