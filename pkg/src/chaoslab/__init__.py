"""chaoslab: mean-field particle systems, the 2D vorticity reference PDE,
propagation-of-chaos metrics, and certified combinatorial bounds."""

__version__ = "0.1.0"

from .torus import wrap, displacement, DimensionMismatchError
from .fields import GridField, grid_points
from .kernels import (
    Kernel,
    ZeroKernel,
    FourierKernel,
    FourierField,
    ZeroField,
    BiotSavartKernel,
    eval_kernel,
    convolve,
    spectral_divergence,
    kernel_from_config,
)
from .potential import build_biot_savart_potential, residual_check
from .particles import (
    ParticleState,
    SimConfig,
    Ensemble,
    pairwise_drift,
    step,
    simulate,
    run_ensemble,
)
from .meanfield import (
    PDEConfig,
    vorticity_to_velocity,
    step_pde,
    solve,
    initial_condition,
)
from .metrics import (
    estimate_marginal,
    relative_entropy,
    l1_distance,
    ckp_check,
    fit_rate,
    EntropyReport,
)
from .combinatorics import (
    BoundReport,
    stirling_factors,
    binom_bound_check,
    count_compositions,
    multiplicity_count,
    effective_set,
    j_set,
    theorem3_constant,
    theorem4_constant,
)
from .partition import (
    partition_function,
    partition_value,
    change_of_law_check,
    verify_cancellation,
    cancellation_audit,
    growth_norm,
)
from .testfunctions import TestFunctionPair, tensor_test_function

__all__ = [
    "__version__",
    "wrap",
    "displacement",
    "DimensionMismatchError",
    "GridField",
    "grid_points",
    "Kernel",
    "ZeroKernel",
    "FourierKernel",
    "FourierField",
    "ZeroField",
    "BiotSavartKernel",
    "eval_kernel",
    "convolve",
    "spectral_divergence",
    "kernel_from_config",
    "build_biot_savart_potential",
    "residual_check",
    "ParticleState",
    "SimConfig",
    "Ensemble",
    "pairwise_drift",
    "step",
    "simulate",
    "run_ensemble",
    "PDEConfig",
    "vorticity_to_velocity",
    "step_pde",
    "solve",
    "initial_condition",
    "estimate_marginal",
    "relative_entropy",
    "l1_distance",
    "ckp_check",
    "fit_rate",
    "EntropyReport",
    "BoundReport",
    "stirling_factors",
    "binom_bound_check",
    "count_compositions",
    "multiplicity_count",
    "effective_set",
    "j_set",
    "theorem3_constant",
    "theorem4_constant",
    "partition_function",
    "partition_value",
    "change_of_law_check",
    "verify_cancellation",
    "cancellation_audit",
    "growth_norm",
    "TestFunctionPair",
    "tensor_test_function",
]
