"""Exception types raised by covop."""


class CovopError(ValueError):
    """Base class for input and design errors."""


class DegenerateGroupError(CovopError):
    """A group has fewer than two observed curves."""


class InvalidInputError(CovopError):
    """A matrix or array violates a structural requirement."""


class UnsupportedDesignError(CovopError):
    """The design is not supported by the requested permutation strategy."""


class UnsupportedSizeError(CovopError):
    """The number of hypotheses is too large for the requested procedure."""
