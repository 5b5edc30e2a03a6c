"""Exception hierarchy shared by every module."""


class FocalInfoNCEError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(FocalInfoNCEError, ValueError):
    """Array shapes or lengths do not agree."""


class DegenerateInputError(FocalInfoNCEError, ValueError):
    """Input is well-shaped but mathematically unusable (zero norm, NaN...)."""


class DomainError(FocalInfoNCEError, ValueError):
    """Argument lies outside the domain of the operation."""


class UndefinedCorrelationError(DomainError):
    """Correlation requested on fewer than two points or a constant ranking."""


class DivergenceError(FocalInfoNCEError, FloatingPointError):
    """Training produced non-finite parameters."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite parameters after step {step}")


class IngestionError(FocalInfoNCEError, ValueError):
    """A data file could not be parsed or failed validation."""

    def __init__(self, message, path=None, offset=None, line=None):
        self.path = path
        self.offset = offset
        self.line = line
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"byte {offset}")
        prefix = ", ".join(where) + ": " if where else ""
        super().__init__(prefix + message)


class BadMagicError(IngestionError):
    pass


class UnsupportedVersionError(IngestionError):
    pass


class TruncatedFileError(IngestionError):
    pass


class TrailingDataError(IngestionError):
    pass


class DuplicateIdError(IngestionError):
    pass


class NonFiniteValueError(IngestionError):
    pass


class MissingIdError(IngestionError, KeyError):
    def __str__(self):
        return self.args[0] if self.args else ""


class PairFormatError(IngestionError):
    pass


class GoldRangeError(IngestionError):
    pass


class ConfigError(FocalInfoNCEError, ValueError):
    """Base class for run-configuration problems."""


class UnknownKeyError(ConfigError):
    pass


class ConfigValueError(ConfigError):
    """A value could not be parsed."""


class BoundError(ConfigError):
    """A value parsed but lies outside its permitted range."""
