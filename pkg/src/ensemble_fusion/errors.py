"""Error hierarchy shared by the library and the command-line interface.

Every error knows which broad category it belongs to, so the CLI can report it on one line and exit with a stable
code without inspecting messages.
"""


class EnsembleFusionError(Exception):
    category = "error"
    exit_code = 1


class ConfigError(EnsembleFusionError, ValueError):
    """Invalid configuration: thresholds, fusion method, manifest layout or command-line usage."""

    category = "config"
    exit_code = 2


class DataError(EnsembleFusionError, ValueError):
    """Input data violates the detection data model."""

    category = "data"
    exit_code = 3


class MalformedFileError(DataError):
    """File is not valid JSON or has the wrong top-level shape."""


class UnknownImageError(DataError):
    """A record refers to an image that the ground truth does not declare."""


class InvalidRecordError(DataError):
    """A single annotation or detection record is invalid."""


class EmptyBinError(DataError):
    """Statistics were requested for a calibration bin without members."""


class NoSamplesError(DataError):
    """Calibration error is undefined without samples."""


class NoGroundTruthError(DataError):
    """Average precision and recall are undefined without ground-truth boxes."""


class FileAccessError(EnsembleFusionError, OSError):
    category = "io"
    exit_code = 4
