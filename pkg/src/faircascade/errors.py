"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration value or unusable combination of options."""


class DataFormatError(ValueError):
    """Input data file is malformed beyond the tolerated fraction."""


class SingularMatrixError(ArithmeticError):
    """A rank-1 inverse update would make the matrix singular."""


class FactorizationError(RuntimeError):
    """Matrix factorization failed to converge."""


class UndefinedDistributionError(ValueError):
    """A distribution statistic was requested on an all-zero distribution."""
