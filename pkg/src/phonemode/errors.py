"""Exception types raised across the toolkit.

Every contract violation gets a distinct class so callers (and tests) can
match on the failure kind rather than parse messages.
"""


class PhonemodeError(Exception):
    """Base class for all toolkit errors."""


class UnsupportedEncodingError(PhonemodeError):
    """WAV container is not 16-bit linear PCM."""


class ChannelCountError(PhonemodeError):
    """WAV container holds more than one channel."""


class TruncatedHeaderError(PhonemodeError):
    """WAV container header is incomplete or corrupt."""


class EmptyResultError(PhonemodeError):
    """An operation produced an empty signal (e.g. silence removal ate everything)."""


class LengthError(PhonemodeError):
    """Input signal is too short for the requested operation."""


class ManifestError(PhonemodeError):
    """Manifest record is malformed; message carries the line number."""


class ManifestWarning(UserWarning):
    """Non-fatal manifest validation issue (e.g. speaker overlap across splits)."""


class ContourLengthError(PhonemodeError):
    """Waveform length does not map onto the required contour length."""


class DimensionMismatchError(PhonemodeError):
    """Vector/matrix dimensions do not match the model contract."""


class TrainingDivergedError(PhonemodeError):
    """Training loss became non-finite; message names the epoch."""


class InventoryError(PhonemodeError):
    """Transcript contains a phone label missing from the inventory."""


class UndefinedCorrelationError(PhonemodeError):
    """Correlation requested on a zero-variance input."""


class EmptyReferenceError(PhonemodeError):
    """Phone error rate requested against an empty reference."""


class ConfigError(PhonemodeError):
    """Configuration file or value is invalid (unknown key, bad range)."""


class ContainerFormatError(PhonemodeError):
    """Serialized feature/model container is malformed."""


class StageError(PhonemodeError):
    """A pipeline stage failed; message names the stage."""
