"""Exception types shared across the package."""


class CftMpsError(Exception):
    """Base class for all errors raised by :mod:`cftmps`."""


class AlgebraValidationError(CftMpsError):
    pass


class NotIntegrableError(CftMpsError, ValueError):
    pass


class CutoffError(CftMpsError, IndexError):
    """A level or grade shift beyond a hard module cutoff was requested."""


class IntegrabilityError(CftMpsError):
    """The contravariant form turned out indefinite on a constructed level."""


class ChainError(CftMpsError, ValueError):
    """Field chain is not composable or does not match the requested boundaries."""


class NonConvergenceError(CftMpsError):
    pass
