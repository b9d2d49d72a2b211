"""
Exception hierarchy for the RDFC pipeline.

ValidationError subclasses signal bad inputs (CLI exit code 1); everything
else deriving from RDFCError is a runtime failure (exit code 2).
"""

from typing import Optional, Tuple


class RDFCError(Exception):
    """Base class for all pipeline errors."""


class ValidationError(RDFCError):
    """Invalid input, shape mismatch or violated invariant."""


class ConfigError(ValidationError):
    """Unknown key, unparsable value or missing required key."""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


class FormatError(ValidationError):
    """Malformed artifact file (bad magic, version or length)."""


class SupportError(ValidationError):
    """KL divergence undefined: p has mass where q has none."""

    def __init__(self, cell: Tuple[int, ...], p_value: float):
        super().__init__(f"support violation at cell {cell}: p={p_value:.6g} but q=0")
        self.cell = cell
        self.p_value = p_value


class EmptyBinError(ValidationError):
    """An empty K- or L-range was required."""

    def __init__(self, message: str, x: Optional[int] = None, y: Optional[int] = None, b: Optional[int] = None):
        super().__init__(message)
        self.x = x
        self.y = y
        self.b = b


class BudgetError(ValidationError):
    """Exhaustive enumeration would exceed the configured budget."""


class NonFiniteError(RDFCError):
    """NaN or Inf reached a layer boundary."""


class ConvergenceError(RDFCError):
    """Numeric optimiser failed to find a feasible optimum."""

    def __init__(self, message: str, best_value: float):
        super().__init__(f"{message} (best value found: {best_value:.6f})")
        self.best_value = best_value


class StageError(RDFCError):
    """Failure inside a named pipeline stage."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause

    @property
    def is_validation(self) -> bool:
        return isinstance(self.cause, ValidationError)
