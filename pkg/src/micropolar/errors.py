"""Exception hierarchy; the CLI maps each class to an exit code."""


class MicropolarError(Exception):
    """Base class for package errors."""


class ConfigurationError(MicropolarError, ValueError):
    """Invalid parameters, grids too small for dealiasing, bad config files."""


class BandError(ConfigurationError):
    """A field lives on the wrong Fourier band."""


class NumericalError(MicropolarError, ArithmeticError):
    """Pointwise inversion failure, solver non-convergence, NaNs."""


class BlowUpError(MicropolarError):
    """The blow-up guard on the microinertia perturbation tripped."""

    def __init__(self, message, time=None, value=None):
        super().__init__(message)
        self.time = time
        self.value = value
