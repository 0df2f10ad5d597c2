"""Exception types raised across the toolkit."""


class AdapidError(Exception):
    """Base class for toolkit errors."""


class ContractViolation(AdapidError, ValueError):
    """An argument breaks an operation's precondition."""


class ConfigurationError(AdapidError, ValueError):
    """An experiment or component configuration is invalid."""


class IngestionError(AdapidError, ValueError):
    """A data file could not be parsed; message names row and column."""


class SchemaError(IngestionError):
    """A data file has an inconsistent layout."""


class PECertificationError(AdapidError):
    """A regressor stream failed persistence-of-excitation certification."""


class NumericalError(AdapidError, ArithmeticError):
    """A recursive update lost a required numerical property."""
