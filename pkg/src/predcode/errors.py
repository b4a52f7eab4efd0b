"""Exception hierarchy shared across the package.

Error categories map onto CLI exit codes: UsageError exits 1, everything
else derived from PredcodeError exits 2.
"""


class PredcodeError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(PredcodeError):
    """A model/operation was built or called with incompatible settings."""


class InputError(PredcodeError):
    """Runtime data (frames, labels, indices) violates a precondition."""


class UsageError(PredcodeError):
    """An API or CLI call sequence makes no sense (e.g. backward on an empty tape)."""


class NumericsError(PredcodeError):
    """Training produced NaN/Inf where finite values are required."""


class FormatError(PredcodeError):
    """A binary container is malformed. Carries the byte offset of the defect."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
