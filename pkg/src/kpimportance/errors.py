"""Exception types raised across the package."""


class KPError(Exception):
    """Base class for all package errors."""


class SchemaError(KPError):
    """A dataset or checkpoint record is malformed or missing a field."""


class DimensionError(KPError, ValueError):
    """Array shapes do not conform."""


class DomainError(KPError, ValueError):
    """An argument lies outside the domain of a function."""


class ConfigError(KPError, ValueError):
    """A configuration value violates its constraints."""


class LoadError(KPError):
    """An external file could not be loaded into the expected form."""


class NonFiniteError(KPError, FloatingPointError):
    """A NaN or Inf was produced or supplied."""
