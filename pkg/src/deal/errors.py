"""Exception hierarchy shared across the package."""


class DealError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(DealError, ValueError):
    pass


class NonConvergence(DealError, RuntimeError):
    pass


class InvalidOrder(DealError, ValueError):
    pass


class UnregisteredPrimitive(DealError, KeyError):
    pass


class RankTooLarge(DealError, ValueError):
    pass


class RankOutOfRange(DealError, ValueError):
    pass


class RankDeficient(DealError, ValueError):
    pass


class NonFiniteLoss(DealError, FloatingPointError):
    def __init__(self, message: str, step: int | None = None, diagnostics: dict | None = None):
        super().__init__(message)
        self.step = step
        self.diagnostics = diagnostics or {}


class IncompleteMatrix(DealError, ValueError):
    pass


class InvalidPermutation(DealError, ValueError):
    pass


class ConfigError(DealError, ValueError):
    """Bad configuration. ``key`` names the offending setting when known."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class CheckpointError(DealError):
    pass


class VersionMismatch(CheckpointError):
    pass


class ChecksumFailure(CheckpointError):
    pass


class IoFailure(CheckpointError, OSError):
    pass
