"""Exception types raised across the package."""


class EkiError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(EkiError, ValueError):
    pass


class NotSPD(EkiError, ArithmeticError):
    """Cholesky factorization failed, even after diagonal jitter."""


class NonSymmetric(EkiError, ValueError):
    pass


class BasisMismatch(EkiError, ValueError):
    pass


class TooFewModes(EkiError, ValueError):
    pass


class AlphaTooSmall(EkiError, ValueError):
    """Covariance power too small for the operator to be trace class in 2d."""


class SolveFailure(EkiError, ArithmeticError):
    pass


class PointOutsideDomain(EkiError, ValueError):
    pass


class EnsembleTooSmall(EkiError, ValueError):
    pass


class NotLinearModel(EkiError, TypeError):
    pass


class LmStalled(EkiError, ArithmeticError):
    """Levenberg-Marquardt damping grew past its ceiling without progress."""


class ConfigError(EkiError, ValueError):
    pass


class EmptyInput(EkiError, ValueError):
    pass
