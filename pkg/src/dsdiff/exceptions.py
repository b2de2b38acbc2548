"""Exception types raised across the package."""


class InvalidStateError(ValueError):
    """A state vector or state index does not belong to the state space."""


class FullSupportError(ValueError):
    """A distribution has a zero-probability state where full support is required."""


class OracleCapError(ValueError):
    """The state space is too large for dense enumeration."""


class RateBoundError(ValueError):
    """A uniformization rate does not dominate the exit rates."""


class TrainingAborted(FloatingPointError):
    """Training produced a non-finite loss or gradient."""

    def __init__(self, message, epoch=None, k=None, batch=None):
        super().__init__(message)
        self.epoch = epoch
        self.k = k
        self.batch = batch


class CheckpointMismatchError(ValueError):
    """Checkpoint headers in one directory disagree."""
