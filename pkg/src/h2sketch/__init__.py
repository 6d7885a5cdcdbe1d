"""Sketching-based construction of H2 matrices for symmetric kernel operators."""

from .cluster import (
    ADMISSIBLE,
    DENSE,
    INNER,
    ClusterTree,
    MatrixTree,
    build_cluster_tree,
    build_matrix_tree,
    is_admissible,
    sparsity_constant,
)
from .construction import ConstructionConfig, ConstructionError, ConstructionStats, construct
from .dense import column_pivoted_qr, is_converged, row_id
from .h2matrix import H2Matrix, extract_entries, matvec, memory_report, to_dense
from .io import generate_points, load_h2, read_dense, read_points, save_h2, write_dense, write_points
from .kernels import DenseEvaluator, ExponentialCovariance, HelmholtzIE, KernelEvaluator, kernel_matrix
from .samplers import (
    DenseSampler,
    KernelSampler,
    LowRankUpdate,
    estimate_operator_norm,
    estimate_rel_error,
    make_updated_evaluator,
    make_updated_sampler,
)

__version__ = "0.1.0"
