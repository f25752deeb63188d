"""Langevin Monte Carlo with full, random-coordinate and coordinate-averaged gradients."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    KernelParams,
    TargetModel,
    gaussian_target,
    mixture_target,
    validate_overdamped_params,
    validate_underdamped_params,
)
from .samplers import (  # noqa: E402
    ChainConfig,
    InitialDistribution,
    SamplerKind,
    expected_evals,
    run_chain,
    run_ensemble,
)

__all__ = [
    "__version__",
    "KernelParams",
    "TargetModel",
    "gaussian_target",
    "mixture_target",
    "validate_overdamped_params",
    "validate_underdamped_params",
    "ChainConfig",
    "InitialDistribution",
    "SamplerKind",
    "expected_evals",
    "run_chain",
    "run_ensemble",
]
