"""
Exception hierarchy for PRISM.

Library modules raise these; only main.py turns them into exit codes.
"""

from utils.constants import EXIT_DATA, EXIT_NUMERICAL


class PrismError(Exception):
    """Base class for all PRISM failures"""
    exit_code = EXIT_NUMERICAL


class GenerationError(PrismError):
    """Random geometry generation hit the rejection cap"""


class NearLinearDependenceError(PrismError):
    """Overlap matrix is numerically singular (atoms nearly coincident)"""


class UnsupportedSizeError(PrismError):
    """System is too large for a dense oracle"""


class NumericalError(PrismError):
    """NaN loss, non-real Pauli coefficient and similar breakdowns"""


class UnsupportedOperatorError(PrismError):
    """Autodiff graph uses an operator outside the supported set"""


class DataError(PrismError):
    """Corrupt or incompatible dataset / checkpoint content"""
    exit_code = EXIT_DATA

    def __init__(self, message: str, line_number: int = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number
