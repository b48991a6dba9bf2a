"""Exception types shared across the package.

The CLI maps these onto stable exit codes: usage errors exit 2, data errors
exit 3, numeric divergence exits 4.
"""


class MaskpoolError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(MaskpoolError, ValueError):
    """Tensor extents are invalid or operands do not conform."""


class TooShortError(MaskpoolError, ValueError):
    """A signal or valid length is below the minimum the operation needs."""


class EmptyInputError(MaskpoolError, ValueError):
    """An operation that needs data received none."""


class AudioFormatError(MaskpoolError, ValueError):
    """WAV file is readable but not PCM 16-bit mono."""


class FileParseError(MaskpoolError, ValueError):
    """A binary container (WAV, feature cache, checkpoint) is malformed."""


class CheckpointError(FileParseError):
    """Checkpoint magic/version mismatch or truncation."""


class ConfigMismatchError(MaskpoolError, ValueError):
    """Checkpoint configuration is incompatible with the requested run."""


class ManifestError(MaskpoolError, ValueError):
    """Dataset manifest fails validation (unknown class, bad fold, ...)."""


class LabelError(MaskpoolError, ValueError):
    """Labels are out of range or not binary where binary is required."""


class DegenerateLabelsError(MaskpoolError, ValueError):
    """A metric needs both positives and negatives but got only one kind."""


class UninitializedStatsError(MaskpoolError, RuntimeError):
    """Batch norm was asked to run in eval mode before its running
    statistics were ever set."""


class NumericError(MaskpoolError, ArithmeticError):
    """A numeric routine produced or received a non-finite value."""


class DivergenceError(NumericError):
    """Training produced non-finite gradients or losses."""
