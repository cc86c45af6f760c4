"""Coded polynomial aggregation (CPA).

Recover ``sum_k w_k F(X_k)`` for a degree-``d`` polynomial ``F`` from ``N``
coded worker responses, with fewer responses than decoding every ``F(X_k)``
individually would need.
"""
from .errors import *  # noqa: F401,F403
from .numerics import (
    Poly,
    barycentric_eval,
    barycentric_weights,
    determinant,
    interpolate_values,
    kernel_basis,
    lagrange_interpolate,
    matrix_rank,
    poly_divide,
    poly_eval,
    poly_roots,
)
from .pipeline import (
    AggregateResult,
    Dataset,
    EncodedShare,
    ErrorPolynomialReport,
    TaskSpec,
    WorkerResponse,
    baseline_amplification,
    baseline_points,
    decode_cpa,
    decode_individual,
    encode,
    error_polynomial_check,
    ground_truth,
    individual_points,
    random_dataset,
    random_task,
    recovery_error,
    run_pipeline,
    worker_compute,
)
from .scheme import (
    CauchyBinet,
    ConstraintSystem,
    CpaScheme,
    FeasibilityCertificate,
    ProbeReport,
    SystemParams,
    Verdict,
    build_constraint_system,
    cauchy_binet_check,
    check_feasibility,
    construct_evaluation_points,
    genericity_probe,
    individual_threshold,
    infeasibility_certificate,
    min_responses,
    orthogonality_residual,
    random_params,
    scheme_from_coefficients,
)
from .simulator import (
    Message,
    MessageKind,
    RunTrace,
    SimConfig,
    TraceReport,
    UniformRandomLatency,
    ZeroLatency,
    run_simulation,
    trace_validate,
)

__version__ = "0.1.0"
