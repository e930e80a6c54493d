"""Exception hierarchy.

Contract violations (bad shapes, bad arguments, unparsable input) derive from
:class:`ValueError`; numerical breakdowns derive from :class:`NumericalError`.
The CLI maps the former to exit status 2 and the latter to exit status 3.
"""


class ModalPPError(Exception):
    """Base class for all package errors."""


class ContractViolation(ModalPPError, ValueError):
    """An argument does not satisfy an operation's preconditions."""


class ParseError(ContractViolation):
    """Malformed input file. Carries the offending location when known."""

    def __init__(self, message, *, path=None, row=None, column=None):
        loc = []
        if path is not None:
            loc.append(str(path))
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        super().__init__(f"{': '.join([', '.join(loc), message]) if loc else message}")
        self.path = path
        self.row = row
        self.column = column


class NumericalError(ModalPPError, ArithmeticError):
    """Base class for numerical failures."""


class DegenerateModelError(NumericalError):
    """A model parameter (usually a covariance) is not positive definite."""


class DegenerateFitError(NumericalError):
    """EM produced a collapsed component."""

    def __init__(self, message, component=None):
        super().__init__(message)
        self.component = component


class NoModelError(NumericalError):
    """Every cell of a model-selection grid failed."""

    def __init__(self, message, failures=None):
        super().__init__(message)
        self.failures = dict(failures or {})


class AlgorithmFault(NumericalError):
    """An invariant that holds in exact arithmetic was violated at runtime."""


class DegenerateARIError(NumericalError):
    """The adjusted Rand index is 0/0 for two different partitions."""
