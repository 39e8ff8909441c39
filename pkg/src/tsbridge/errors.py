"""Exception hierarchy shared across the package.

Every error carries an ``exit_code`` so the CLI can map failures onto its
documented process exit codes: 2 configuration, 3 data/schema, 4 numerical.
"""


class TsbridgeError(Exception):
    exit_code = 1


class ConfigError(TsbridgeError):
    """Invalid configuration value or combination."""

    exit_code = 2


class DimensionError(ConfigError):
    """Array shapes incompatible with the requested operation."""


class DomainError(ConfigError):
    """Argument outside the mathematical domain of the operation."""


class ContractError(TsbridgeError):
    """Caller violated an API precondition (programming error)."""

    exit_code = 2


class DataError(TsbridgeError):
    """Input data unusable: too short, empty, non-finite, degenerate."""

    exit_code = 3


class SchemaError(DataError):
    """File content does not match the documented schema."""


class NumericalError(TsbridgeError):
    """Numerical failure at run time."""

    exit_code = 4


class TrainingError(NumericalError):
    """Training diverged; message names the failing epoch."""


class EstimationError(NumericalError):
    """Statistical estimation failed; message names the parameter."""
