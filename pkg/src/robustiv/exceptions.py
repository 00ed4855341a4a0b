"""Exception hierarchy for robustiv.

The CLI maps these onto exit codes: configuration, data, and estimation
problems exit with code 2; anything else is an internal error (code 1).
"""


class RobustIVError(Exception):
    """Base class for all robustiv errors."""


class ConfigError(RobustIVError):
    """Invalid configuration: levels, subset sizes, grids, config files."""


class DataError(RobustIVError):
    """Invalid input data: shapes, non-finite values, rank deficiency."""


class EstimationError(RobustIVError):
    """Estimation is not possible on this data (degenerate or just-identified fits)."""
