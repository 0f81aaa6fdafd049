"""Massive-MIMO uplink detection via penalized-sharing ADMM.

A library and Monte-Carlo harness for symbol detection in large
multi-user MIMO uplinks: a box-constrained nonconvex ADMM detector
operating on binary-decomposed QAM symbols, classical baselines
(MMSE, zero-forcing, Neumann-series, Gauss-Seidel, box-constrained
ADMM, exhaustive maximum likelihood), runtime convergence diagnostics,
and reproducible BER experiments with CSV output.
"""

from .baselines import (
    BaselineConfig,
    box_admm,
    gauss_seidel_mmse,
    gauss_seidel_solve,
    ml_bruteforce,
    mmse,
    neumann_inverse_apply,
    neumann_mmse,
    zf,
)
from .harness import (
    AuditResult,
    BerRecord,
    ExperimentSpec,
    SweepRecord,
    TraceAggregate,
    complexity_audit,
    convergence_trace_experiment,
    parameter_sweep,
    run_experiment,
    run_trial,
)
from .model import (
    BinaryDecomposition,
    Constellation,
    TransmissionInstance,
    bits_to_symbols,
    decompose,
    generate_instance,
    hard_slice,
    noise_variance,
    recompose,
    sign_decision,
    symbols_to_bits,
)
from .numerics import (
    GramSystem,
    OpCounter,
    SpectralEstimate,
    gram,
    solve,
    spectral_estimate,
    system_from_gram,
)
from .psadmm import (
    ConditionViolation,
    ConvergenceBudget,
    IterationTrace,
    PsAdmmParams,
    PsAdmmState,
    augmented_lagrangian,
    detect,
    iteration_bound,
    objective,
    stationarity_residual,
    update_x0,
    update_xq,
    update_y,
    validate_params,
)

__version__ = "0.1.0"

__all__ = [
    "AuditResult",
    "BaselineConfig",
    "BerRecord",
    "BinaryDecomposition",
    "ConditionViolation",
    "Constellation",
    "ConvergenceBudget",
    "ExperimentSpec",
    "GramSystem",
    "IterationTrace",
    "OpCounter",
    "PsAdmmParams",
    "PsAdmmState",
    "SpectralEstimate",
    "SweepRecord",
    "TraceAggregate",
    "TransmissionInstance",
    "augmented_lagrangian",
    "bits_to_symbols",
    "box_admm",
    "complexity_audit",
    "convergence_trace_experiment",
    "decompose",
    "detect",
    "gauss_seidel_mmse",
    "gauss_seidel_solve",
    "generate_instance",
    "gram",
    "hard_slice",
    "iteration_bound",
    "ml_bruteforce",
    "mmse",
    "neumann_inverse_apply",
    "neumann_mmse",
    "noise_variance",
    "objective",
    "parameter_sweep",
    "recompose",
    "run_experiment",
    "run_trial",
    "sign_decision",
    "solve",
    "spectral_estimate",
    "stationarity_residual",
    "symbols_to_bits",
    "system_from_gram",
    "update_x0",
    "update_xq",
    "update_y",
    "validate_params",
    "zf",
    "__version__",
]
