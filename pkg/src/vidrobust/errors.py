"""Exception types shared across the package."""


class VidRobustError(Exception):
    """Base class for all package-specific errors."""


class ShapeMismatchError(VidRobustError, ValueError):
    """Operands have incompatible shapes."""


class VtenError(VidRobustError, ValueError):
    """Base class for .vten container problems."""


class VtenMagicError(VtenError):
    """File does not start with the expected magic bytes."""


class VtenFormatError(VtenError):
    """Unsupported version, rank, or dtype code."""


class VtenTruncatedError(VtenError):
    """Declared payload size does not match the file remainder."""


class VtenRangeError(VtenError):
    """A stored value lies outside the permitted [0, 1] range."""


class FrameIngestError(VidRobustError, ValueError):
    """A frame directory could not be ingested."""


class GridIndexError(VidRobustError, IndexError):
    """Patch index outside the grid's action space."""


class LedgerError(VidRobustError, ValueError):
    """Malformed perturbation ledger or replay request."""


class NonFiniteGradientError(VidRobustError, FloatingPointError):
    """A gradient buffer contains NaN or infinity."""


class TrainingFailureError(VidRobustError, RuntimeError):
    """A victim failed to reach the required validation accuracy."""


class SampleRejectedError(VidRobustError, RuntimeError):
    """The victim misclassifies the clean sample; it cannot be attacked."""


class RemoteTransportError(VidRobustError, ConnectionError):
    """Transport-level failure talking to a remote victim (retriable)."""


class RemoteProtocolError(VidRobustError, RuntimeError):
    """The remote victim violated the wire protocol."""


class ConfigError(VidRobustError, ValueError):
    """Bad run configuration (unknown key, unparsable value)."""
