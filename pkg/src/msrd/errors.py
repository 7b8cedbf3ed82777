"""Exception taxonomy shared across the engine.

DataError covers malformed inputs (shapes, parameter ranges, file contents);
NumericalError covers runs that drift into non-finite state.  The service
layer maps these onto distinct HTTP error kinds and the CLI onto distinct
exit codes.
"""


class MsrdError(Exception):
    """Base class for all engine errors."""


class DataError(MsrdError, ValueError):
    """Invalid input data or parameters."""


class NumericalError(MsrdError, ArithmeticError):
    """A computation produced NaN/Inf or otherwise lost numerical validity."""
