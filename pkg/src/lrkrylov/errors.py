"""Exception types shared across the package."""


class LowRankKrylovError(Exception):
    """Base class for all errors raised by lrkrylov."""


class ContractViolationError(LowRankKrylovError, ValueError):
    """An argument violates a documented precondition (shape, sign, range)."""


class NumericError(LowRankKrylovError, ArithmeticError):
    """Non-finite values or a numerically impossible state was encountered."""


class ResourceLimitError(LowRankKrylovError):
    """A dense materialization would exceed the configured size guard."""


class FactorizationError(LowRankKrylovError):
    """A required matrix factorization failed (e.g. a singular factor)."""


class SylvesterSingularityError(FactorizationError):
    """The Sylvester operator A Y + Y B^T is singular: the spectra of A and
    -B^T overlap (up to a numerical tolerance)."""


class SpdViolationError(LowRankKrylovError):
    """The operator turned out not to be positive definite at run time."""


class ParseError(LowRankKrylovError):
    """A problem file could not be parsed."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        loc = ""
        if path is not None:
            loc = f" [{path}" + (f":{line}" if line is not None else "") + "]"
        super().__init__(message + loc)


class ValidationError(LowRankKrylovError):
    """Problem files parsed correctly but are mutually inconsistent."""
