"""Exception hierarchy shared across the package.

The CLI maps these onto distinct process exit codes: usage errors -> 2,
I/O and image-format errors -> 3, model-container errors -> 4, anything
else -> 5.
"""


class SlideAssessError(Exception):
    """Base class for all package-specific errors."""


class UsageError(SlideAssessError):
    """Invalid arguments or inconsistent configuration."""


class UnknownLabelError(UsageError):
    """A label outside the canonical eight-class set."""


# --- slide / raster I/O -----------------------------------------------------

class SlideIOError(SlideAssessError):
    """Base class for raster decode/encode failures."""


class UnsupportedFormatError(SlideIOError):
    """File is readable but not one of the supported raster formats."""


class CorruptImageError(SlideIOError):
    """File matches a supported format but its header or payload is broken."""


# --- model containers ---------------------------------------------------------

class ModelError(SlideAssessError):
    """Base class for model container failures."""


class BadMagicError(ModelError):
    """Container file does not start with the expected magic bytes."""


class UnsupportedVersionError(ModelError):
    """Container version is not supported by this reader."""


class DescriptorError(ModelError):
    """Architecture descriptor is malformed or violates layer invariants."""


class ShapeMismatchError(ModelError):
    """Weight payload size disagrees with the declared layer shapes."""


class LabelCountError(ModelError):
    """Label list length disagrees with the output dimension of the head."""


# --- benchmarking -------------------------------------------------------------

class BenchAbortedError(SlideAssessError):
    """Engine failed mid-stream; carries the number of completed patches."""

    def __init__(self, message: str, completed: int):
        super().__init__(message)
        self.completed = completed
