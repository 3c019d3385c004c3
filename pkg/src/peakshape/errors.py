"""Exception hierarchy shared by the library and the command line.

Each class carries the process exit code the CLI reports for it.
"""


class PeakShapeError(Exception):
    exit_code = 1


class ConfigError(PeakShapeError):
    """Invalid or unknown configuration values."""

    exit_code = 1


class DataError(PeakShapeError):
    """Malformed input data: bad CSV, mismatched grids, invalid warpings."""

    exit_code = 2


class NumericalError(PeakShapeError):
    """A numerical stage could not produce a usable result."""

    exit_code = 3
