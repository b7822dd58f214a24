"""Exception hierarchy shared by all modules."""
from __future__ import annotations


class BiofilmError(Exception):
    """Base class for every error raised by this package."""


class DomainError(BiofilmError, ValueError):
    """Input lies outside the admissible state set (M >= 1, u_i <= 0, ...)."""


class AccuracyError(BiofilmError):
    """A quadrature did not reach the requested tolerance."""

    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved relative error {achieved:.3e})")
        self.achieved = achieved


class NumericalError(BiofilmError):
    """An iterative solve failed to converge."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class StepRejected(NumericalError):
    """A time step produced a state violating u_i >= 0 or M < 1."""

    def __init__(self, message: str, node, value: float):
        BiofilmError.__init__(self, f"{message} at node {node}: {value!r}")
        self.residual = float("nan")
        self.node = node
        self.value = value


class ConfigError(BiofilmError, ValueError):
    """Malformed or unknown configuration entry."""
