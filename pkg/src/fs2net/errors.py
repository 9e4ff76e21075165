"""Operational exception types shared across the package."""


class Fs2NetError(Exception):
    """Base class for errors raised by fs2net operations."""


class DatasetError(Fs2NetError):
    """Malformed dataset file or invalid fiber collection."""


class PairingError(Fs2NetError):
    """A class pool is too small to assemble the requested batch."""


class TrainingError(Fs2NetError):
    """Training aborted (e.g. non-finite loss)."""


class CheckpointError(Fs2NetError):
    """Unreadable, corrupt, or version-incompatible checkpoint file."""


class DefaultSetError(Fs2NetError):
    """Default reference set cannot be built or is invalid."""


class MetricsError(Fs2NetError):
    """Prediction table unsuitable for metric computation."""
