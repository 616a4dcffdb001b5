"""Exception types shared across the package.

The CLI maps these onto stable exit codes (see cli.py), so library code
should raise the most specific class that applies.
"""


class AmsCascadeError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(AmsCascadeError):
    """Invalid configuration value, file, or flag combination."""


class DataError(AmsCascadeError):
    """Malformed or inconsistent input data (schema, parse, validation)."""


class TrainingError(AmsCascadeError):
    """A base learner cannot be fit on the given inputs."""


class CascadeError(AmsCascadeError):
    """A cascade run could not produce any usable round."""


class DegenerateInputError(AmsCascadeError):
    """An operation was asked to evaluate a mathematically undefined case."""
