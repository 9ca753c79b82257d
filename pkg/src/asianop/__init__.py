"""American arithmetic and geometric Asian options as a degenerate obstacle problem.

Submodules: ``model`` (parameters, payoffs, barrier), ``operators`` and
``green`` (Kolmogorov operators, group structure, fundamental solutions),
``solver``, ``domains``, ``diagnostics`` and ``reduction`` (finite
differences), ``mc`` (simulation and least-squares stopping), ``config``,
``runner`` and ``cli`` (command line).
"""

from .errors import (AsianopError, CalibrationError, ConfigError, ConvergenceError, DomainError,
                     HypothesisError, NumericalError, UnsupportedReductionError, ValidationFailure)
from .model import (Averaging, ModelParams, PayoffKind, PayoffSpec, SpaceTimePoint,
                    SuperSolutionParams, calibrate_supersolution, payoff_eval, supersolution_eval,
                    supersolution_residual)

__version__ = "0.1.0"

__all__ = [
    "AsianopError", "CalibrationError", "ConfigError", "ConvergenceError", "DomainError",
    "HypothesisError", "NumericalError", "UnsupportedReductionError", "ValidationFailure",
    "Averaging", "ModelParams", "PayoffKind", "PayoffSpec", "SpaceTimePoint",
    "SuperSolutionParams", "calibrate_supersolution", "payoff_eval", "supersolution_eval",
    "supersolution_residual",
]
