"""Exception hierarchy shared across the package."""


class RefineError(Exception):
    """Base class for all package errors."""


class UsageError(RefineError):
    """Caller violated an API or configuration contract."""


class DataError(RefineError):
    """Input data failed validation (values, shapes, ranges)."""


class FormatError(RefineError):
    """A file did not match its declared on-disk format."""


class StrategyError(RefineError):
    """A strategy invocation failed inside the filtering loop."""

    def __init__(self, message, strategy=None, batch_index=None):
        super().__init__(message)
        self.strategy = strategy
        self.batch_index = batch_index
