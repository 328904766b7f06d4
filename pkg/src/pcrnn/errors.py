"""Exception hierarchy shared by all modules."""


class PCRNError(Exception):
    """Base class for library errors."""


class ShapeError(PCRNError, ValueError):
    """Array dimensions do not agree."""


class UsageError(PCRNError, ValueError):
    """An API was called with arguments that violate its contract."""


class ConfigError(PCRNError, ValueError):
    """A model, layer, or run configuration is invalid."""


class DataError(PCRNError, ValueError):
    """Input data (tokens, corpus, files) is unusable."""


class CheckpointError(DataError):
    """A checkpoint file could not be loaded."""


class MagicError(CheckpointError):
    pass


class VersionError(CheckpointError):
    pass


class TruncatedError(CheckpointError):
    pass


class CheckpointDimensionError(CheckpointError):
    pass
