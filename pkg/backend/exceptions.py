from typing import Optional


class CrivetError(Exception):
    """Base class for all analysis errors. Carries the CLI exit code."""

    exit_code: int = 1

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message

    def annotate(self, context: str) -> "CrivetError":
        """Prefix the message with extra context (e.g. the shift being fitted)"""
        self.message = f"{context}: {self.message}"
        self.args = (self.message,)
        return self

    def __str__(self) -> str:
        return self.message


class CohortIOError(CrivetError):
    """Input could not be read or output could not be written"""
    exit_code = 1


class InputValidationError(CrivetError):
    """Schema, precondition or configuration violation"""
    exit_code = 2


class NumericalError(CrivetError):
    """Estimation failed for numerical reasons"""
    exit_code = 3


class ConvergenceError(NumericalError):
    """Newton-Raphson did not converge; keeps the fit diagnostics"""

    def __init__(self, message: str, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class SeparationError(NumericalError):
    """Monotone likelihood detected for a covariate"""

    def __init__(self, message: str, covariate: Optional[str] = None, diagnostics=None):
        super().__init__(message)
        self.covariate = covariate
        self.diagnostics = diagnostics


class CensoringSupportError(NumericalError):
    """Censoring distribution reached zero where a weight needs it"""


class NonFiniteError(NumericalError):
    """Non-finite intermediate in the partial likelihood"""

    def __init__(self, message: str, stratum: Optional[str] = None, time: Optional[float] = None):
        super().__init__(message)
        self.stratum = stratum
        self.time = time
