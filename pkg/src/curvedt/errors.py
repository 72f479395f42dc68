"""Exception hierarchy shared by all curvedt modules."""


class CurvedtError(Exception):
    """Base class for every error raised by the package."""


class DomainError(CurvedtError, ValueError):
    """Argument outside the domain of a mathematical function."""


class GeometryError(CurvedtError, ValueError):
    """Invalid curve, phantom or line geometry."""


class BoundaryAmbiguityError(GeometryError):
    """Point too close to a sampled boundary to classify."""


class ValidityError(CurvedtError):
    """A kernel construction condition does not hold for the given target."""

    def __init__(self, message, sample=None):
        super().__init__(message)
        self.sample = sample


class ConvergenceError(CurvedtError):
    """Iterative solve failed; carries the best iterate and its statistics."""

    def __init__(self, message, x=None, stats=None):
        super().__init__(message)
        self.x = x
        self.stats = stats


class FormatError(CurvedtError, ValueError):
    """Malformed file contents."""
