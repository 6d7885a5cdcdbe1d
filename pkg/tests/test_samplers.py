import numpy as np
import pytest
import scipy.linalg

from h2sketch import (
    DenseSampler,
    LowRankUpdate,
    estimate_operator_norm,
    estimate_rel_error,
    make_updated_evaluator,
    make_updated_sampler,
)
from h2sketch.samplers import H2Evaluator, KernelSampler, power_norm


def test_rel_error_of_identical_operators(cov512):
    a = DenseSampler(cov512.K)
    assert estimate_rel_error(a, a) <= 1e-14


def test_rank_one_perturbation(cov512):
    b = DenseSampler(cov512.K)
    delta = 1e-3
    pert = cov512.K.copy()
    pert[0, 0] += delta
    est = estimate_rel_error(DenseSampler(pert), b, iters=20)
    assert est == pytest.approx(delta / np.linalg.norm(cov512.K, 2), rel=0.05)


def test_norm_examples():
    assert estimate_operator_norm(DenseSampler(np.eye(7)), 3) == pytest.approx(1.0, abs=1e-15)
    assert estimate_operator_norm(DenseSampler(np.diag(np.arange(1.0, 11))), 30) == pytest.approx(10, rel=0.01)
    assert power_norm(DenseSampler(np.zeros((4, 4)))) == 0.0
    with pytest.raises(ValueError):
        power_norm(DenseSampler(np.eye(2)), 0)


def test_norm_vs_dense(cov4096):
    est = estimate_operator_norm(DenseSampler(cov4096.K), 20)
    n = cov4096.K.shape[0]
    ends = scipy.linalg.eigvalsh(cov4096.K, subset_by_index=[n - 1, n - 1])
    assert est == pytest.approx(abs(ends[-1]), rel=0.05)


def test_kernel_sampler_matches_dense(cov512, rng):
    x = rng.standard_normal((512, 3))
    ks = KernelSampler(cov512.tree.coords, cov512.spec, rows_per_chunk=50)
    np.testing.assert_allclose(ks.apply(x), cov512.K @ x, rtol=1e-13, atol=1e-12)


def test_zero_update_is_base(h2_1024, rng):
    h2, _ = h2_1024
    s = make_updated_sampler(h2, LowRankUpdate(np.zeros((h2.n, 4))))
    x = rng.standard_normal((h2.n, 2))
    np.testing.assert_array_equal(s.apply(x), h2.matvec(x))


def test_updated_evaluator_definition(h2_1024, rng):
    h2, _ = h2_1024
    f = rng.standard_normal((h2.n, 5))
    ev = make_updated_evaluator(h2, LowRankUpdate(f))
    rows, cols = np.array([3, 500, 77]), np.array([10, 900])
    (got,) = ev.eval_blocks([(rows, cols)])
    (base,) = H2Evaluator(h2).eval_blocks([(rows, cols)])
    np.testing.assert_array_equal(got, base + f[rows] @ f[cols].T)


def test_update_validation():
    with pytest.raises(ValueError):
        LowRankUpdate(np.ones(4))
    with pytest.raises(ValueError):
        LowRankUpdate(np.array([[np.nan]]))
    with pytest.raises(ValueError):
        make_updated_sampler(DenseSampler(np.eye(3)), LowRankUpdate(np.ones((4, 1))))
