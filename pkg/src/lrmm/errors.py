"""Exception hierarchy; the CLI maps each family to an exit code."""


class LrmmError(Exception):
    exit_code = 1


class ConfigError(LrmmError, ValueError):
    exit_code = 2


class DataError(LrmmError, ValueError):
    """Malformed, truncated or version-mismatched files and datasets."""

    exit_code = 3


class NumericError(LrmmError, ArithmeticError):
    exit_code = 4
