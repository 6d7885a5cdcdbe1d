import json

import numpy as np
import pytest
from conftest import build

from h2sketch import ClusterTree, ConstructionConfig, ConstructionError, DenseSampler, MatrixTree, construct, save_h2
from h2sketch.construction import PHASES, _Builder, gaussian_block, subtract_far_contributions
from h2sketch.h2matrix import NearField
from h2sketch.kernels import DenseEvaluator


def exact_error(h2, k):
    return np.linalg.norm(h2.to_dense() - k, 2) / max(np.linalg.norm(k, 2), 1e-300)


def test_accuracy_1024(cov1024, h2_1024):
    h2, stats = h2_1024
    assert exact_error(h2, cov1024.K) <= 1e-5
    assert set(stats.timings_ms) == set(PHASES)
    assert stats.total_samples % 32 == 0


def test_single_leaf():
    pts = np.random.default_rng(0).random((50, 3))
    k = np.exp(-np.linalg.norm(pts[:, None] - pts[None], axis=-1) / 0.2)
    tree = ClusterTree(pts, 64)
    mt = MatrixTree(tree, 0.7)
    kt = k[np.ix_(tree.perm, tree.perm)]
    h2, stats = construct(DenseSampler(kt), DenseEvaluator(kt), mt, ConstructionConfig())
    assert h2.top_depth is None and stats.total_samples == 0
    np.testing.assert_array_equal(h2.near.panels[0], kt)
    np.testing.assert_array_equal(h2.to_dense(), kt)


def test_zero_operator(cov512):
    z = np.zeros_like(cov512.K)
    h2, stats = construct(DenseSampler(z), DenseEvaluator(z), cov512.mt, ConstructionConfig(leaf_size=16))
    assert np.abs(h2.to_dense()).max() <= 1e-12
    assert stats.total_samples == 32
    assert max(stats.rank_max.values()) == 0


def rank_operator(n, r, seed):
    q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((n, r)))
    return (q * np.logspace(0, -0.5, r)) @ q.T


def test_low_rank_converges_without_refinement(cov512):
    a = rank_operator(512, 5, 0)
    h2, stats = construct(DenseSampler(a), DenseEvaluator(a), cov512.mt, ConstructionConfig(leaf_size=16))
    assert stats.total_samples == 32
    assert all(v == 0 for v in stats.rounds.values())
    assert exact_error(h2, a) <= 1e-5


def test_rank_40_needs_refinement(cov1024):
    a = rank_operator(1024, 40, 1)
    h2, stats = construct(DenseSampler(a), DenseEvaluator(a), cov1024.mt, ConstructionConfig(leaf_size=32))
    assert sum(stats.rounds.values()) >= 1
    assert stats.total_samples >= 64
    assert np.linalg.norm(h2.to_dense() - a, 2) <= 10 * stats.tol_abs


def leaf_samples(problem, omega):
    b = _Builder(DenseSampler(problem.K), problem.evaluator, problem.mt, ConstructionConfig())
    b.near = NearField(problem.tree, problem.mt, problem.evaluator.eval_blocks(NearField.requests(problem.tree, problem.mt)))
    return b.leaf_samples(omega, problem.K @ omega)


def test_appended_columns_span_far_field(cov512):
    tree, mt = cov512.tree, cov512.mt
    leaf = tree.leaf_depth
    one_shot = leaf_samples(cov512, gaussian_block(0, 0, 512, 64))[1]
    first = leaf_samples(cov512, gaussian_block(0, 0, 512, 32))[1]
    extra = leaf_samples(cov512, gaussian_block(0, 1, 512, 32))[1]
    for s in range(tree.n_nodes(leaf)):
        rows = np.arange(tree.begin[leaf][s], tree.end[leaf][s])
        near = np.zeros(512, bool)
        for t in mt.near_partners(s):
            near[tree.begin[leaf][t] : tree.end[leaf][t]] = True
        far = cov512.K[np.ix_(rows, np.nonzero(~near)[0])]
        u, sv, _ = np.linalg.svd(far, full_matrices=False)
        q = u[:, sv > 1e-12 * max(sv[0], 1e-300)] if far.size else u[:, :0]
        for y in (one_shot[s], np.hstack([first[s], extra[s]])):
            resid = np.linalg.norm(y - q @ (q.T @ y)) / max(np.linalg.norm(y), 1e-300)
            assert resid <= 1e-8


def test_all_dense_leaf_subtraction_is_exact(cov512):
    mt = MatrixTree(cov512.tree, 1e-12)
    b = _Builder(DenseSampler(cov512.K), cov512.evaluator, mt, ConstructionConfig())
    b.near = NearField(cov512.tree, mt, cov512.evaluator.eval_blocks(NearField.requests(cov512.tree, mt)))
    omega = gaussian_block(3, 0, 512, 8)
    _, yloc = b.leaf_samples(omega, cov512.K @ omega)
    assert max(np.abs(y).max() for y in yloc) <= 1e-12


def test_subtract_far_contributions(rng):
    y = rng.standard_normal((5, 3))
    np.testing.assert_array_equal(subtract_far_contributions(y, [], []), y)
    om = rng.standard_normal((5, 3))
    np.testing.assert_array_equal(subtract_far_contributions(y, [np.eye(5)], [om]), y - om)
    with pytest.raises(ValueError):
        subtract_far_contributions(y, [np.eye(4)], [om])


def test_max_samples_exceeded(cov1024):
    a = np.random.default_rng(0).standard_normal((1024, 1024))
    a = a + a.T
    with pytest.raises(ConstructionError) as exc:
        construct(DenseSampler(a), DenseEvaluator(a), cov1024.mt, ConstructionConfig(max_samples=32))
    assert exc.value.level is not None


def test_non_finite_sampler(cov512):
    class Bad:
        n = 512

        def apply(self, x):
            return np.full_like(x, np.nan)

    with pytest.raises(ConstructionError):
        construct(Bad(), cov512.evaluator, cov512.mt, ConstructionConfig(norm=1.0))


def test_dimension_mismatch(cov512):
    with pytest.raises(ValueError):
        construct(DenseSampler(np.eye(3)), cov512.evaluator, cov512.mt)


def test_config_validation():
    for bad in (dict(eps=0), dict(eps=1.5), dict(sample_block=0), dict(max_samples=8), dict(norm_method="x")):
        with pytest.raises(ValueError):
            ConstructionConfig(**bad)
    assert ConstructionConfig(adaptive=False, rank=40, oversampling=10).initial_samples == 50


def test_fixed_mode(cov1024):
    h2, stats = build(cov1024, adaptive=False, rank=96, oversampling=0)
    assert stats.total_samples == 96
    assert all(v == 0 for v in stats.rounds.values())
    assert exact_error(h2, cov1024.K) <= 1e-5


def test_sketch_norm(cov1024):
    h2, stats = build(cov1024, norm_method="sketch")
    assert 0 < stats.norm_estimate <= np.linalg.norm(cov1024.K, 2) * (1 + 1e-12)
    assert exact_error(h2, cov1024.K) <= 1e-5


def test_error_monotone_in_eps(cov1024):
    coarse, _ = build(cov1024, eps=1e-3)
    fine, _ = build(cov1024, eps=1e-8)
    assert exact_error(coarse, cov1024.K) >= exact_error(fine, cov1024.K)


def test_gaussian_block_deterministic():
    np.testing.assert_array_equal(gaussian_block(5, 2, 100, 4), gaussian_block(5, 2, 100, 4))
    assert not np.array_equal(gaussian_block(5, 2, 100, 4), gaussian_block(5, 3, 100, 4))


def test_thread_count_does_not_change_output(cov1024, tmp_path):
    outs = []
    for workers in (1, 4):
        h2, stats = build(cov1024, workers=workers)
        path = tmp_path / f"w{workers}.h2"
        save_h2(path, h2)
        outs.append((path.read_bytes(), stats.to_json(timings=False)))
    assert outs[0] == outs[1]


def test_stats_json(h2_1024):
    _, stats = h2_1024
    d = json.loads(stats.to_json())
    assert set(d["timings_ms"]) == set(PHASES)
    assert "timings_ms" not in json.loads(stats.to_json(timings=False))
    lo, hi = stats.leaf_rank_range()
    assert 0 <= lo <= hi and hi > 0
