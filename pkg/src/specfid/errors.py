"""Exception types shared across the package."""


class SpecfidError(Exception):
    """Base class for all package errors."""


class FormatError(SpecfidError, ValueError):
    """File or text content does not follow the expected layout."""


class TruncationError(FormatError):
    """Declared dimensions disagree with the amount of payload present."""


class DataError(SpecfidError, ValueError):
    """Numeric content is invalid (non-finite, unparsable, unsorted)."""


class DomainError(SpecfidError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ShapeError(SpecfidError, ValueError):
    """Matrix or vector dimensions are incompatible."""


class ConfigError(SpecfidError, ValueError):
    """An experiment or scheme configuration is invalid."""
