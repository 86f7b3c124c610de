"""Exception hierarchy shared across the package."""


class RplsError(Exception):
    """Base class for all errors raised by :mod:`rpls`."""


class InvalidInput(RplsError, ValueError):
    """Input has the wrong shape, type or contains non-finite values."""


class EmptyInput(InvalidInput):
    pass


class NotPositiveDefinite(InvalidInput):
    """A matrix expected to be SPD has a non-positive eigenvalue."""


class BaseMismatch(InvalidInput):
    """A tangent vector is used at a base point it is not attached to."""


class InvalidComponents(InvalidInput):
    pass


class DegenerateResponse(RplsError, ValueError):
    """A block became numerically zero (nothing left to explain)."""


class DegenerateModel(RplsError, ValueError):
    pass


class NonConvergence(RplsError, RuntimeError):
    def __init__(self, message, component=None):
        super().__init__(message)
        self.component = component


class RankDeficiency(RplsError, ValueError):
    pass


class ConstantSignal(InvalidInput):
    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class OutOfDomain(InvalidInput):
    pass


class ParseError(InvalidInput):
    """Malformed input file; message carries file and line."""
