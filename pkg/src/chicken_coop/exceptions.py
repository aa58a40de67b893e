"""Exception types raised across the package."""


class InvalidConfigurationError(ValueError):
    """A configuration value violates its contract."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class UndefinedMetricError(ValueError):
    """A metric was requested over an empty window (zero meetings)."""


class SnapshotDecodeError(ValueError):
    """A serialized policy snapshot could not be decoded."""


class InvalidInputError(ValueError):
    """An experiment input (e.g. a source population) is unusable."""
