"""
Partitioning points into a cluster tree and a block tree
========================================================

A KD-tree splits the points, and a dual traversal of that tree decides
which blocks of the kernel matrix are stored as low-rank couplings and
which stay dense.
"""

import numpy as np

from h2sketch import ClusterTree, MatrixTree, generate_points, sparsity_constant

# a 16 x 16 x 16 lattice in the unit cube, leaves of 64 points
points = generate_points(4096, 3, "grid")
tree = ClusterTree(points, leaf_size=64)
print("levels:", tree.n_levels, " leaves:", tree.n_nodes(tree.leaf_depth))

# every leaf of the block tree is admissible (low rank) or dense
for eta in (0.5, 0.7, 1.0):
    mt = MatrixTree(tree, eta)
    n_adm = sum(len(mt.admissible_pairs(d)) for d in range(tree.n_levels))
    print(f"eta={eta}: {n_adm} admissible blocks, {len(mt.dense_pairs())} dense, C_sp={sparsity_constant(mt)}")

# the leaves tile the matrix: each entry sits in exactly one block
mt = MatrixTree(tree, 0.7)
assert mt.leaf_area() == tree.n**2
depth, s, t, status = mt.locate(np.array([0, 100, 4000]), np.array([4095, 101, 17]))
for row in zip(depth, s, t, status):
    print("depth %d, block (%d, %d), status %d" % tuple(int(v) for v in row))
