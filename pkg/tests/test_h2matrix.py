import numpy as np
import pytest
from conftest import build

from h2sketch import (
    ClusterTree,
    ConstructionConfig,
    DenseSampler,
    H2Matrix,
    MatrixTree,
    construct,
    extract_entries,
    matvec,
    memory_report,
    to_dense,
)
from h2sketch.cluster import ADMISSIBLE, DENSE
from h2sketch.h2matrix import NearField


def test_zero_vector(h2_1024):
    h2, _ = h2_1024
    np.testing.assert_array_equal(h2.matvec(np.zeros((h2.n, 3))), 0)


def test_matvec_matches_dense(cov1024, h2_1024, rng):
    h2, _ = h2_1024
    x = rng.standard_normal((h2.n, 10))
    dense = to_dense(h2)
    np.testing.assert_allclose(matvec(h2, x), dense @ x, rtol=0, atol=1e-11)
    np.testing.assert_allclose(h2 @ x[:, 0], dense @ x[:, 0], rtol=0, atol=1e-11)
    # against the kernel itself, normalised like the construction error
    err = np.linalg.norm(h2.matvec(x) - cov1024.K @ x, axis=0) / np.linalg.norm(x, axis=0)
    assert err.max() / np.linalg.norm(cov1024.K, 2) <= 5e-6


def test_to_dense_symmetric_and_accurate(cov1024, h2_1024):
    h2, _ = h2_1024
    t = h2.to_dense()
    assert np.abs(t - t.T).max() <= 1e-13
    assert np.linalg.norm(t - cov1024.K, 2) / np.linalg.norm(cov1024.K, 2) <= 1e-5


def test_expand_basis(h2_1024, cov1024):
    h2, _ = h2_1024
    leaf = h2.tree.leaf_depth
    assert h2.expand_basis(leaf, 0) is h2.U[0]
    k = leaf - 1
    x = h2.expand_basis(k, 3)
    manual = np.vstack([h2.U[6] @ h2.E[leaf][6], h2.U[7] @ h2.E[leaf][7]])
    np.testing.assert_array_equal(x, manual)
    tree = h2.tree
    for depth in range(h2.top_depth, tree.n_levels):
        for s, t in h2.mtree.admissible_pairs(depth)[:20]:
            blk = h2.expand_basis(depth, s) @ h2.coupling(depth, s, t) @ h2.expand_basis(depth, t).T
            ref = cov1024.K[tree.begin[depth][s] : tree.end[depth][s], tree.begin[depth][t] : tree.end[depth][t]]
            assert np.abs(blk - ref).max() <= 1e-4


def test_extract_matches_to_dense(h2_1024):
    h2, _ = h2_1024
    dense = h2.to_dense()
    idx = np.arange(0, h2.n, 7)
    (blk,) = extract_entries(h2, [(idx, idx[::-1])])
    np.testing.assert_allclose(blk, dense[np.ix_(idx, idx[::-1])], rtol=0, atol=1e-13)


def test_extract_full_matrix_small(cov512):
    h2, _ = build(cov512, leaf_size=16)
    idx = np.arange(h2.n)
    (blk,) = extract_entries(h2, [(idx, idx)])
    np.testing.assert_allclose(blk, h2.to_dense(), rtol=0, atol=1e-13)


def test_extract_dense_leaf_exact(h2_1024, cov1024):
    h2, _ = h2_1024
    s, t = h2.mtree.dense_pairs()[5]
    leaf = h2.tree.leaf_depth
    i = np.arange(h2.tree.begin[leaf][s], h2.tree.end[leaf][s])
    j = np.arange(h2.tree.begin[leaf][t], h2.tree.end[leaf][t])
    (blk,) = extract_entries(h2, [(i, j)])
    np.testing.assert_array_equal(blk, cov1024.K[np.ix_(i, j)])


def test_random_entries(h2_4096, cov4096, rng):
    h2, _ = h2_4096
    i, j = rng.integers(0, h2.n, 50), rng.integers(0, h2.n, 50)
    np.testing.assert_allclose(h2.entries(i, j), cov4096.K[i, j], rtol=0, atol=1e-4)
    _, _, _, status = h2.mtree.locate(i, j)
    assert (status == ADMISSIBLE).any()


def test_bad_entry_indices(h2_1024):
    h2, _ = h2_1024
    with pytest.raises(IndexError):
        h2.entries([0], [h2.n])


def test_memory_report(h2_1024):
    h2, _ = h2_1024
    rep = memory_report(h2)
    assert rep["total"] == sum(v for k, v in rep.items() if k != "total")
    assert set(rep) == {"U", "E", "B", "D", "indices", "total"}


def test_single_leaf_memory():
    pts = np.random.default_rng(0).random((64, 3))
    tree = ClusterTree(pts, 64)
    mt = MatrixTree(tree, 0.7)
    near = NearField(tree, mt, [np.ones((64, 64))])
    m = H2Matrix(tree, mt, None, near)
    rep = m.memory_report()
    assert rep["D"] == 64 * 64 * 8
    assert rep["total"] == rep["D"]


def test_all_dense_matvec_exact(cov512, rng):
    mt = MatrixTree(cov512.tree, 1e-12)
    h2, stats = construct(DenseSampler(cov512.K), cov512.evaluator, mt, ConstructionConfig(leaf_size=16))
    assert h2.top_depth is None and stats.total_samples == 0
    x = rng.standard_normal((512, 4))
    np.testing.assert_allclose(h2.matvec(x), cov512.K @ x, rtol=0, atol=1e-13 * np.abs(cov512.K).sum())
    np.testing.assert_array_equal(h2.to_dense(), cov512.K)


def test_locate_statuses(h2_1024):
    h2, _ = h2_1024
    _, _, _, status = h2.mtree.locate(np.arange(h2.n), np.arange(h2.n))
    assert np.all(status == DENSE)


def test_dense_guard(h2_1024):
    h2, _ = h2_1024
    with pytest.raises(ValueError):
        h2.to_dense(guard=100)
