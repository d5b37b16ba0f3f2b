"""Numerical laboratory for the Keller-Segel system with nonlinear diffusion.

Phase separation, Gamma-convergence of the rescaled energy towards
surface tension times perimeter, and Hele-Shaw behaviour of the limit
interface, checked at desk scale.
"""

from .errors import (ConfigError, ConfigurationError, DissipationViolation, DomainError,
                     HypothesisViolation, InvalidParameterError, NotFoundError, NumericalError,
                     PKSError, StepFailure)
from .potentials import Nonlinearity, PhaseConstants, Potentials, normalize, phase_constants

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ConfigurationError", "DissipationViolation", "DomainError",
    "HypothesisViolation", "InvalidParameterError", "NotFoundError", "NumericalError",
    "PKSError", "StepFailure", "Nonlinearity", "PhaseConstants", "Potentials", "normalize",
    "phase_constants",
]
