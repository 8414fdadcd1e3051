"""Exception hierarchy.

The CLI maps these onto exit codes: usage problems exit 1, data problems
exit 2 and infeasible calibrations exit 3.
"""


class EigenscanError(Exception):
    """Base class for all errors raised by the package."""


class InvalidArgumentError(EigenscanError, ValueError):
    """An argument violates a documented precondition."""


class TailResolutionError(InvalidArgumentError):
    """A quantile was requested deeper in the tail than the table resolves."""


class CalibrationInfeasibleError(EigenscanError):
    """No threshold achieves the requested false-alarm budget."""


class DataError(EigenscanError, ValueError):
    """Malformed or non-finite observations."""


class NumericError(EigenscanError, ArithmeticError):
    """Non-finite values reached a numerical routine."""


class DetectorAlarmedError(EigenscanError):
    """A detector that already alarmed was stepped without a reset."""
