"""Exception hierarchy shared across the package."""


class EpiloopError(Exception):
    """Base class for all package errors."""


class InputError(EpiloopError):
    """Invalid argument values or mismatched shapes."""


class IntegrationDivergedError(EpiloopError):
    """Non-finite state or a compartment below the negativity tolerance."""


class CalibrationError(EpiloopError):
    """Fit failed; carries the iteration index when available."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class DegenerateDataError(EpiloopError):
    """Case series carries no usable signal (e.g. all zeros)."""


class BootstrapUnstableError(EpiloopError):
    """Too many bootstrap replicas failed to refit."""


class SchemaError(EpiloopError):
    """File violates its declared schema."""


class ParseError(EpiloopError):
    """File could not be parsed; carries a line number when available."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class IntegrityError(EpiloopError):
    """Model file is corrupted or truncated."""


class MigrationError(EpiloopError):
    """Model file schema version is not supported."""


class UnderpoweredExperimentError(EpiloopError):
    """Synthetic experiment produced mostly degenerate epidemics."""
