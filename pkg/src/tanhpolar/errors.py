"""Exception types shared across the package."""


class TanhPolarError(Exception):
    """Base class for errors raised by this package."""


class InvalidBBoxError(TanhPolarError, ValueError):
    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class OutOfRangeError(TanhPolarError, ValueError):
    """A coordinate lies outside the open domain of a tanh-compressed map."""


class ShapeError(TanhPolarError, ValueError):
    """Array shapes, channel counts or class counts do not agree."""
