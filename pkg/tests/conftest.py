import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from h2sketch import ClusterTree, MatrixTree, generate_points
from h2sketch.kernels import ExponentialCovariance, HelmholtzIE, KernelEvaluator, kernel_matrix

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


class Problem:
    """Points, partition and dense kernel matrix, all in tree order."""

    def __init__(self, n, spec, leaf_size=64, eta=0.7, mode="grid", seed=0):
        self.points = generate_points(n, 3, mode, seed)
        self.tree = ClusterTree(self.points, leaf_size)
        self.mt = MatrixTree(self.tree, eta)
        self.spec = spec
        self.K = kernel_matrix(self.tree.coords, spec)
        self.evaluator = KernelEvaluator(self.tree.coords, spec)

    @property
    def dense(self):
        return self.K


@pytest.fixture(scope="session")
def cov512():
    return Problem(512, ExponentialCovariance(0.2), mode="random", leaf_size=16)


@pytest.fixture(scope="session")
def cov1024():
    return Problem(1024, ExponentialCovariance(0.2), mode="random", leaf_size=32)


@pytest.fixture(scope="session")
def cov4096():
    return Problem(4096, ExponentialCovariance(0.2))


@pytest.fixture(scope="session")
def ie4096():
    return Problem(4096, HelmholtzIE(3.0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def build(problem, **cfg):
    from h2sketch import ConstructionConfig, DenseSampler, construct

    return construct(DenseSampler(problem.K), problem.evaluator, problem.mt, ConstructionConfig(**cfg))


@pytest.fixture(scope="session")
def h2_1024(cov1024):
    return build(cov1024, leaf_size=32)


@pytest.fixture(scope="session")
def h2_4096(cov4096):
    return build(cov4096)


ACCEPTANCE = {}


def record(number, title, passed, detail):
    """Store one acceptance verdict for the end-of-run summary."""
    ACCEPTANCE[number] = (title, bool(passed), detail)
    print(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}: {title} ({detail})")
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}: {title} ({detail})")
