"""Exception types shared across the package."""


class QFedSimError(Exception):
    """Base class for package errors."""


class EmbeddingError(QFedSimError):
    """All-zero amplitude-embedding input with the fallback disabled."""


class GateError(QFedSimError):
    """Invalid gate application (e.g. CNOT with control == target)."""


class ChannelError(QFedSimError):
    """Channel parameter out of range."""


class ZneConfigError(QFedSimError):
    """Invalid zero-noise-extrapolation configuration."""


class ScaleOverflowError(QFedSimError):
    """A ZNE scale factor pushed the channel strength past 1 with clipping off."""


class DegenerateReferenceError(QFedSimError):
    """Reference gradient norm too small for a fractional error."""


class ClientDataError(QFedSimError):
    """A client has no local data."""


class AggregationError(QFedSimError):
    """Malformed set of client deltas at the server."""


class PartitionError(QFedSimError):
    """Dirichlet partitioning could not produce nonempty shards."""


class FloorNotReachedError(QFedSimError):
    """A synthetic floor run did not plateau (advisory)."""


class ConfigError(QFedSimError):
    """Invalid experiment configuration; message names the offending key."""
