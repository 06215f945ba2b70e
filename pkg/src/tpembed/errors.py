"""Exception types shared across the package.

The CLI maps these onto process exit codes: DataError and its subclasses
exit with 3, DivergenceError with 4, bad flags/config with 2.
"""


class TpembedError(Exception):
    """Base class for all package errors."""


class DataError(TpembedError):
    """Invalid or insufficient input data."""


class NormalizationError(DataError):
    """Vector cannot be normalized (zero norm or non-finite entries)."""


class ManifestError(DataError):
    """Malformed feature file. Carries the 1-based line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DegenerateDataError(DataError):
    """Data rank too low for the requested decomposition."""


class InsufficientDataError(DataError):
    """Dataset cannot support the requested sampling or protocol."""


class ProtocolError(DataError):
    """Score set or identification protocol violates a metric's contract."""


class DivergenceError(TpembedError):
    """Training produced non-finite values. Carries the failing iteration."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration
