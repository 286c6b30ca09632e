"""Shared-subspace spiked covariance estimation for multiple groups."""

__version__ = "0.1.0"

from ._accel import backend
from .em import EmFitResult, EmOptions, fit, goodness_of_fit, log_marginal_likelihood
from .gibbs import ChainConfig, GibbsChain, run_chain, stein_estimator
from .model import (
    FullBasis,
    GroupDataset,
    GroupSpikeParams,
    ModelError,
    NumericalError,
    SubspaceBasis,
)
from .ranks import estimate_group_rank, estimate_shared_dimension

__all__ = [
    "__version__",
    "backend",
    "ChainConfig",
    "EmFitResult",
    "EmOptions",
    "FullBasis",
    "GibbsChain",
    "GroupDataset",
    "GroupSpikeParams",
    "ModelError",
    "NumericalError",
    "SubspaceBasis",
    "estimate_group_rank",
    "estimate_shared_dimension",
    "fit",
    "goodness_of_fit",
    "log_marginal_likelihood",
    "run_chain",
    "stein_estimator",
]
