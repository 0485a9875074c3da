"""Exception types raised across the package."""


class MicropolarError(Exception):
    """Base class for all errors raised by micropolar_lab."""


class InvalidRangeError(MicropolarError, ValueError):
    pass


class InvalidScaleError(MicropolarError, ValueError):
    pass


class InvalidParameterError(MicropolarError, ValueError):
    pass


class UnsupportedRepresentationError(MicropolarError, TypeError):
    pass


class InsufficientSamplingError(MicropolarError, ValueError):
    pass


class UndefinedRatioError(MicropolarError, ArithmeticError):
    pass


class SingularFrequencyError(MicropolarError, ValueError):
    pass


class InvalidTimeError(MicropolarError, ValueError):
    pass


class InvalidMatrixError(MicropolarError, ValueError):
    pass


class DegenerateRangeError(MicropolarError, ValueError):
    pass


class EmptySupportError(MicropolarError, ValueError):
    pass


class AccuracyError(MicropolarError, ArithmeticError):
    pass


class ResolutionError(MicropolarError, ValueError):
    pass


class TimeResolutionError(MicropolarError, ValueError):
    pass


class StepTooLargeError(MicropolarError, ArithmeticError):
    """The corrector moved a dyadic block norm by more than the allowed fraction."""

    def __init__(self, message, block=None, change=None):
        super().__init__(message)
        self.block = block
        self.change = change


class BlowUpSuspectedError(MicropolarError, ArithmeticError):
    """Repeated step rejection; carries the trajectory computed so far."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class ConfigError(MicropolarError, ValueError):
    pass


class CalibrationError(MicropolarError, RuntimeError):
    def __init__(self, message, case=None):
        super().__init__(message)
        self.case = case


class PerturbativeRegimeWarning(UserWarning):
    """Amplitude large enough that higher Picard orders may contaminate the second iterate."""
