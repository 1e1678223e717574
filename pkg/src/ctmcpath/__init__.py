"""Exact sampling of endpoint-conditioned continuous-time Markov chain paths.

Three samplers (modified rejection, direct, uniformization) over validated
rate matrices, an analytical cost model that predicts each sampler's expense
and picks the cheapest, built-in substitution models, and a CLI front end.
"""

from . import kernels
from .core import (
    EndpointProblem,
    RateMatrix,
    SamplePath,
    SpectralDecomposition,
    StateSpace,
    StationaryDistribution,
    SufficientStats,
    calibrate_rate_matrix,
    decompose_auto,
    matrix_exponential_fallback,
    partition_observations,
    spectral_decompose,
    split_path,
    stationary_distribution,
    sufficient_stats,
    transition_probability,
    validate_rate_matrix,
)
from .complexity import (
    CalibrationModel,
    CostCoefficients,
    CostPrediction,
    CriticalThresholds,
    acceptance_probability,
    acceptance_small_T,
    calibrate_coefficients,
    coefficient_size_model,
    critical_thresholds,
    expected_recursions_direct,
    expected_recursions_rejection,
    expected_recursions_uniformization,
    inflation_factor,
    predict_and_select,
)
from .models import (
    GyParams,
    HkyCpgParams,
    HkyParams,
    build_gy,
    build_hky,
    build_hky_cpg,
    random_reversible,
    random_sparse_codon,
)
from .randomstream import RandomStream
from .samplers import (
    BatchResult,
    DirectKernel,
    RejectionConfig,
    SampleReport,
    UniformizationKernel,
    build_direct_kernel,
    build_uniformization_kernel,
    conditional_first_jump_time,
    conditional_jump_count,
    direct_first_transition,
    direct_sample,
    forward_sample,
    rejection_proposal,
    rejection_sample,
    sample_batch,
    uniformization_sample,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
