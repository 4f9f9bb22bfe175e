"""Exception hierarchy shared across the package.

Errors are grouped so the CLI can map them onto its exit-code contract:
configuration problems, data problems, and numerical failures.
"""


class HeatcastError(Exception):
    """Base class for all package errors."""


class ConfigError(HeatcastError):
    """Invalid configuration value or malformed config file."""


class DataError(HeatcastError):
    """Invalid, missing, or inconsistent input data."""


class EmptyDataset(DataError):
    """No usable sample could be constructed from the data."""


class InsufficientData(DataError):
    """A well-formed dataset is too small for the requested operation."""


class InsufficientHistory(DataError):
    """Not enough contiguous history records to seed a forecast."""


class NumericalError(HeatcastError):
    """A numerical invariant broke (non-finite value, non-positive variance)."""


class ConvergenceError(NumericalError):
    """Coordinate-ascent objective decreased; signals an implementation bug."""


class DivergenceError(NumericalError):
    """Training loss became non-finite."""


class ShapeError(HeatcastError):
    """Incompatible array shapes passed to a tensor or matrix operation."""


class GraphError(HeatcastError):
    """Invalid use of the autodiff graph (e.g. backward from a non-scalar)."""


class DomainError(HeatcastError):
    """Argument outside the mathematical domain of a function."""
