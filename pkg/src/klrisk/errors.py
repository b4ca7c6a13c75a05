"""Exception hierarchy shared by every module.

Two broad kinds exist: input problems (bad parameters, malformed files,
unsupported combinations), which subclass ``ValueError``, and numerical
failures (non-convergence, stagnation), which subclass ``ArithmeticError``.
The CLI maps the first kind to exit code 1 and the second to exit code 2.
"""


class KLRiskError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(KLRiskError, ValueError):
    """A parameter or argument lies outside its admissible domain."""


class UnsupportedError(KLRiskError, ValueError):
    """The requested family/model/censoring combination is not supported."""


class DegenerateError(KLRiskError, ValueError):
    """The data carry no information for the requested estimate."""


class FormatError(KLRiskError, ValueError):
    """Malformed input text."""


class EmptyDataError(FormatError):
    """Input text has a header but no data rows."""


class BoundaryError(DomainError):
    """The maximizer sits on the boundary of the parameter space."""


class FoldError(KLRiskError, ValueError):
    """A cross-validation training fold contains no events."""


class NumericalError(KLRiskError, ArithmeticError):
    """A numerical routine failed to reach its accuracy target."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class StartError(NumericalError):
    """The objective is not finite at the starting point."""


class BracketError(NumericalError):
    """The supplied bracket does not straddle the target value."""


class MonotonicityError(NumericalError):
    """A function assumed monotone was observed to move the wrong way."""


class RangeError(NumericalError):
    """A search exhausted its admissible range."""


class UnconvergedError(NumericalError):
    """An operation was refused because its input fit did not converge."""
