"""Exception hierarchy shared by every phonemekit module."""


class PhonemeKitError(Exception):
    """Base class for all errors raised by phonemekit."""


class ParameterError(PhonemeKitError, ValueError):
    """An argument violates a documented precondition."""


class InsufficientInputError(ParameterError):
    """Input is too short (or has too few frames) for the requested operation."""


class DegenerateInputError(ParameterError):
    """Input is valid in shape but degenerate in content (e.g. all zeros)."""


class NoSpeechError(ParameterError):
    """No frame rose above the dynamic energy threshold."""


class FormatError(PhonemeKitError):
    """A binary or text file does not follow its documented layout."""


class WavFormatError(FormatError):
    """Malformed RIFF/WAVE container."""


class UnsupportedFormatError(WavFormatError):
    """Well-formed container holding a codec or layout we do not decode."""


class CompositionError(PhonemeKitError):
    """Consecutive layer shapes do not compose."""


class NumericFailureError(PhonemeKitError, ArithmeticError):
    """A NaN or infinity appeared in a loss or gradient."""


class ModelFormatError(FormatError):
    """Model file has a bad magic number or an unreadable descriptor."""


class UnsupportedVersionError(ModelFormatError):
    """Model file version is not one this build can read."""


class TruncatedFileError(PhonemeKitError, OSError):
    """A binary file ended before its declared payload."""
