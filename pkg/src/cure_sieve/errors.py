"""Exception and warning types raised by cure_sieve."""


class CureSieveError(Exception):
    """Base class for all package errors."""


class ConfigurationError(CureSieveError, ValueError):
    """Invalid knot, constraint or fitting configuration."""


class DomainError(CureSieveError, ValueError):
    """A time argument lies outside the support ``[0, tau]``."""


class EvaluationError(CureSieveError, ArithmeticError):
    """The log-likelihood is undefined at the supplied parameters."""


class DataError(CureSieveError, ValueError):
    """The dataset violates a structural requirement."""


class InferenceError(CureSieveError, ArithmeticError):
    """Scores or information matrices could not be computed."""


class McError(CureSieveError, RuntimeError):
    """Too many Monte Carlo replications failed."""


class NonConvergence(UserWarning):
    """Every optimizer start exhausted its iteration budget."""
