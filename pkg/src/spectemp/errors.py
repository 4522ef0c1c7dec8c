"""Shared exception types.

The CLI maps these onto process exit codes (config/usage -> 2, data -> 3,
numerical -> 4), so library code should raise the most specific one that
applies instead of bare ValueError.
"""


class SpectempError(Exception):
    """Base class for all package errors."""


class ShapeError(SpectempError, ValueError):
    """An array argument has the wrong rank or incompatible dimensions."""


class ParameterError(SpectempError, ValueError):
    """A scalar/structural parameter is out of its documented domain."""


class ConfigError(SpectempError, ValueError):
    """A run configuration is malformed or inconsistent."""


class DataError(SpectempError, ValueError):
    """Input data could not be parsed or violates documented preconditions."""


class NumericalError(SpectempError, ArithmeticError):
    """A numerical routine failed to converge or produced non-finite values."""
