"""Exception types raised across the package."""


class EventSegError(Exception):
    """Base class for all package errors."""


class ShapeError(EventSegError, ValueError):
    pass


class OverlapError(EventSegError, ValueError):
    pass


class NotScalar(EventSegError, ValueError):
    pass


class NonFinite(EventSegError, FloatingPointError):
    pass


class TooManyTargets(EventSegError, ValueError):
    def __init__(self, msg, index=None):
        super().__init__(msg)
        self.index = index


class ConfigError(EventSegError, ValueError):
    pass


class FormatError(EventSegError, ValueError):
    pass


class LengthMismatch(EventSegError, ValueError):
    pass


class EmptyDataset(EventSegError, ValueError):
    pass
