"""Exception hierarchy shared by the library and the command line."""


class CleRadiiError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(CleRadiiError, ValueError):
    """An argument lies outside the domain where a formula is valid."""


class PoleError(DomainError):
    """Evaluation was requested at (or numerically on top of) a pole."""


class DegeneracyError(DomainError):
    """A parameter combination is (numerically) integral where it must not be."""


class ConvergenceError(CleRadiiError, ArithmeticError):
    """A series or quadrature failed to reach its tolerance."""


class CensoringError(CleRadiiError, RuntimeError):
    """Too many simulated paths ran past the censoring horizon."""


class ManifestError(CleRadiiError, ValueError):
    """A data file is missing its manifest or the manifest is inconsistent."""


class InsufficientDataError(CleRadiiError, ValueError):
    """Not enough points or events for a requested estimate."""
