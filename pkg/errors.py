# errors.py
#
# Exception hierarchy shared by the solver modules and the CLI.
# Library code raises; fene.py turns these into exit codes.

from __future__ import annotations

from typing import Any, List, Optional


EXIT_OK = 0
EXIT_IO = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_ACCEPTANCE = 4


class FeneError(Exception):
    """Base class; `exit_code` is what the CLI returns for it."""

    exit_code = EXIT_IO


# ---------------------------------------------------------------------------
# Validation (exit 2)
# ---------------------------------------------------------------------------


class ValidationError(FeneError):
    exit_code = EXIT_VALIDATION


class ConfigError(ValidationError):
    """Unknown key, malformed value or violated model hypothesis."""


class DomainError(ValidationError):
    """Argument outside the domain of an operation (|R| > 1, nonzero mass, ...)."""


class InvalidWeightError(ValidationError):
    """Jacobi weight exponent alpha <= -1."""


class ResolutionError(ValidationError):
    """Quadrature too coarse for the requested basis degree."""


class IntegrabilityError(ValidationError):
    """k <= 1: the drag-closure integrands are not integrable."""


class DegenerateInputError(ValidationError):
    pass


class ResamplingError(ValidationError):
    """Record stream is not uniformly spaced in time."""


class InsufficientRangeError(ValidationError):
    """Fit window spans less than one decade."""


# ---------------------------------------------------------------------------
# Numerical (exit 3)
# ---------------------------------------------------------------------------


class NumericalError(FeneError):
    exit_code = EXIT_NUMERICAL


class AssemblyError(NumericalError):
    """Assembled operator violates a structural invariant."""


class StepRejectedError(NumericalError):
    def __init__(self, message: str, suggested_dt: float):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class NumericalBreakdownError(NumericalError):
    pass


class BlowUpError(NumericalError):
    def __init__(self, message: str, last_record: Optional[Any] = None):
        super().__init__(message)
        self.last_record = last_record


# ---------------------------------------------------------------------------
# Acceptance (exit 4) and I/O (exit 1)
# ---------------------------------------------------------------------------


class AcceptanceError(FeneError):
    exit_code = EXIT_ACCEPTANCE


class ReportIOError(FeneError):
    exit_code = EXIT_IO

    def __init__(self, message: str, written: Optional[List[str]] = None):
        super().__init__(message)
        self.written = list(written or [])
