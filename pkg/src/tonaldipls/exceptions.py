"""Exception and warning classes shared across the package."""


class TonalDiPLSError(Exception):
    """Base class for all package errors."""


class InputValidationError(TonalDiPLSError, ValueError):
    """Malformed or inconsistent input data."""


class ConfigError(TonalDiPLSError, ValueError):
    """Invalid hyperparameter or configuration value."""


class DegenerateLabelError(TonalDiPLSError, ValueError):
    """Label vector has zero energy after centering (y'y == 0)."""


class DegenerateDirectionError(TonalDiPLSError, ValueError):
    """Weight vector vanished (features orthogonal to labels)."""


class ConditioningError(TonalDiPLSError, ArithmeticError):
    """Linear system stayed singular after ridge stabilization."""

    def __init__(self, message, condition_number):
        super().__init__(f"{message} (condition number ~ {condition_number:.3e})")
        self.condition_number = condition_number


class SpectralRangeError(TonalDiPLSError, ValueError):
    """Analysis band falls outside (0, Nyquist]."""


class EmptyBandError(TonalDiPLSError, ValueError):
    """No FFT bin lies inside the analysis band."""


class RankDeficiencyWarning(UserWarning):
    """Fewer latent variables could be extracted than requested."""
