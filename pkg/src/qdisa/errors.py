"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
QualityError -> 4. Everything derives from QdisaError so callers can catch
the whole family in one clause.
"""


class QdisaError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 3


class ConfigError(QdisaError):
    """Invalid scenario configuration or CLI input (exit code 2)."""

    exit_code = 2


class DomainError(QdisaError, ValueError):
    """An argument is outside the mathematical domain of an operation."""

    exit_code = 2


class DataError(QdisaError):
    """Structurally invalid data: shape mismatch, bad file, wrong state (exit code 3)."""


class QualityError(QdisaError):
    """Data is well formed but fails a quality gate (exit code 4)."""

    exit_code = 4


class CalibrationError(QualityError):
    """Calibration target unreachable or calibration map unusable."""


class NormalizationError(QualityError):
    """Edge-bin normalization preconditions violated (resonance in the edge bins,
    zero denominator)."""


class AmbiguityError(QualityError):
    """A requested analysis window cannot be mapped one-to-one onto pixels."""

    def __init__(self, message, colliding_bins=None):
        super().__init__(message)
        self.colliding_bins = colliding_bins or []


class NoPeakError(QualityError):
    """Spectrum contains no dip significant enough to fit."""


class FitConvergenceError(QualityError):
    """Least-squares iteration did not converge; carries the last iterate."""

    def __init__(self, message, last_params=None, n_iter=None):
        super().__init__(message)
        self.last_params = last_params
        self.n_iter = n_iter
