"""Exception types. The CLI maps each family to its own exit code."""


class PlanarFaultError(Exception):
    """Base class for all package errors."""


class ConfigError(PlanarFaultError, ValueError):
    """Invalid configuration or argument."""


class DataError(PlanarFaultError, ValueError):
    """Malformed or inconsistent input data."""


class GeometryError(PlanarFaultError, ValueError):
    """Fault geometry violates a physical constraint (e.g. the depth guard)."""


class NumericalError(PlanarFaultError, ArithmeticError):
    """A numerical stage could not produce a usable result."""
