"""Exception hierarchy shared across the library.

Every error carries a short machine-parsable ``category`` so the command-line
front end can emit ``error.<category>: <message>`` lines that CI can assert on.
"""


class DiffsepError(Exception):
    """Base class for all library-specific errors."""

    category = "error"


class ConfigError(DiffsepError):
    """Bad configuration: unknown key, type mismatch, missing required path."""

    category = "config"


class MissingFileError(DiffsepError):
    """A file referenced by a manifest or checkpoint does not exist."""

    category = "missing-file"


class ShapeMismatchError(DiffsepError):
    """On-disk payload size disagrees with the declared shape."""

    category = "shape-mismatch"


class NonFiniteError(DiffsepError):
    """A payload or computed quantity contains NaN or infinity."""

    category = "non-finite"


class GeometryError(DiffsepError):
    """Tensor geometry incompatible with a model or configuration."""

    category = "geometry-mismatch"


class VersionError(DiffsepError):
    """Serialized artifact written by an incompatible format version."""

    category = "version-mismatch"


class CheckpointError(DiffsepError):
    """Corrupt or incomplete checkpoint directory."""

    category = "checkpoint"


class InvalidSubjectError(DiffsepError):
    """Subject id outside the range the model was built for."""

    category = "invalid-subject"
