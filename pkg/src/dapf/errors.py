"""Exception hierarchy shared by all modules.

The CLI prints ``error: <ClassName>: <message>`` for any of these, so the class
name doubles as the machine-parsable error class.
"""


class DapfError(Exception):
    """Base class for all package errors."""


class SchemaError(DapfError):
    """Input columns do not match the expected schema."""


class DataError(DapfError):
    """Malformed data: non-monotone timestamps, gaps, bad values."""


class InsufficientDataError(DapfError):
    """Not enough (valid) history for the requested operation."""


class DegenerateInputError(DapfError):
    """Input is degenerate for the computation (zero variance, too few points)."""


class NonFiniteError(DapfError):
    """A non-finite value appeared during a numerical computation."""


class DivergenceError(DapfError):
    """Training diverged (non-finite validation loss)."""


class ConvergenceError(DapfError):
    """An iterative numerical routine failed to converge."""
