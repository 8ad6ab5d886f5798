"""Exception types shared across the package."""


class SnmError(Exception):
    """Base class for all package errors."""


class ConfigError(SnmError, ValueError):
    """Invalid configuration (templates, metafeatures, trainer, vocab mismatch)."""


class InputError(SnmError, ValueError):
    """Unreadable or inconsistent input data."""


class DomainError(SnmError, ValueError):
    """Argument outside the domain of an operation."""


class ContractError(SnmError, ValueError):
    """A caller violated an operation's precondition."""


class UndefinedRateError(SnmError, ZeroDivisionError):
    """A rate was requested over zero items."""


class ModelFormatError(SnmError, ValueError):
    """A model or counts file could not be parsed."""
