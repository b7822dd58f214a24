"""Volume-filling cross-diffusion biofilm model: closures, entropy, solver, diagnostics."""
from .closures import ClosureTable, ModelParams, get_table
from .errors import (AccuracyError, BiofilmError, ConfigError, DomainError, NumericalError,
                     StepRejected)
from .grid import GridSpec, State

__all__ = [
    "ModelParams", "ClosureTable", "get_table", "GridSpec", "State",
    "BiofilmError", "DomainError", "AccuracyError", "NumericalError", "StepRejected",
    "ConfigError",
]
