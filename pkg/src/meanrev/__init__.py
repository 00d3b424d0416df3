"""Mean-reversion modelling: OU simulation and estimation, Kalman filtering,
day-trading backtests and a method-of-moments Heston fit."""

from .errors import (
    AlignmentError,
    EstimationError,
    FilterError,
    InsufficientDataError,
    MeanRevError,
    ParameterDomainError,
    ParseError,
    SingularityError,
    SingularJacobianError,
    ValidationError,
)
from .sde import HestonParams, OUParams, SimGrid, StatePath

__all__ = [
    "AlignmentError",
    "EstimationError",
    "FilterError",
    "HestonParams",
    "InsufficientDataError",
    "MeanRevError",
    "OUParams",
    "ParameterDomainError",
    "ParseError",
    "SimGrid",
    "SingularityError",
    "SingularJacobianError",
    "StatePath",
    "ValidationError",
]

__version__ = "0.1.0"
