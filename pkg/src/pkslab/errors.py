"""Exception hierarchy.

Validation-type errors map to CLI exit code 1, numerical failures to 2.
"""


class PKSError(Exception):
    """Base class for all pkslab errors."""

    exit_code = 1


class InvalidParameterError(PKSError, ValueError):
    """A parameter is outside its admissible range."""


class DomainError(PKSError, ValueError):
    """An argument lies outside the domain of a function (e.g. negative density)."""


class HypothesisViolation(PKSError):
    """The nonlinearity fails the structural assumptions (convexity, growth, unique well)."""


class ConfigurationError(PKSError):
    """An experiment is set up in a way that cannot produce meaningful output."""


class NotFoundError(PKSError, LookupError):
    """A requested feature (level set, crossing, ...) is absent."""


class ConfigError(PKSError):
    """Config text failed validation. Carries every problem, not just the first."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("\n".join(self.problems))


class NumericalError(PKSError):
    """Root finding, quadrature, or an iterative solve failed to converge."""

    exit_code = 2

    def __init__(self, message, **diagnostics):
        self.diagnostics = diagnostics
        if diagnostics:
            detail = ", ".join(f"{k}={v!r}" for k, v in diagnostics.items())
            message = f"{message} ({detail})"
        super().__init__(message)


class StepFailure(NumericalError):
    """Time step underflow or non-finite state in the dynamics driver."""


class DissipationViolation(NumericalError):
    """Discrete energy-dissipation inequality violated beyond its slack."""
