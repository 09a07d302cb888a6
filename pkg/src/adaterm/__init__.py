"""Noise-robust stochastic-gradient optimization via online Student's-t
moment estimation, with baseline optimizers, problem generators, an
experiment harness and verifiers for the gradient derivations and the
regret bound."""

from .optimizers import (
    ABLATIONS,
    ALGORITHMS,
    LR_SCHEDULES,
    VARIANTS,
    AdaBelief,
    AdaTerm,
    Adam,
    OptimizerConfig,
    ParamGroup,
    TAdam,
    make_optimizer,
    make_param_groups,
)
from .tdist import NonFiniteGradientError, TDistState

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "VARIANTS",
    "ABLATIONS",
    "LR_SCHEDULES",
    "OptimizerConfig",
    "ParamGroup",
    "AdaTerm",
    "Adam",
    "AdaBelief",
    "TAdam",
    "make_optimizer",
    "make_param_groups",
    "TDistState",
    "NonFiniteGradientError",
    "__version__",
]
