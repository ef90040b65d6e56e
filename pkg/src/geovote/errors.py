"""Exception types shared across the package.

Everything raised on purpose derives from GeovoteError so callers (and the
CLI) can split our failures from genuine bugs. Validation-style errors
additionally subclass ValueError to stay friendly to plain try/except
ValueError call sites.
"""

from __future__ import annotations


class GeovoteError(Exception):
    """Base class for all errors raised deliberately by this package."""


class DimensionError(GeovoteError, ValueError):
    """Shapes or lengths that do not line up (vector length, class arity)."""


class EmptyEnsembleError(GeovoteError, ValueError):
    """An aggregation was requested over zero component votes."""


class EmptySystemError(GeovoteError, ValueError):
    """A weight solve was requested before any instance was accumulated."""


class NumericError(GeovoteError, ArithmeticError):
    """Non-finite values or a numerical routine that failed to converge."""


class ConfigurationError(GeovoteError, ValueError):
    """Invalid or inconsistent configuration values."""


class ComponentError(GeovoteError, RuntimeError):
    """A component learner failed inside an ensemble operation."""

    def __init__(self, index: int, message: str):
        super().__init__(f"component {index}: {message}")
        self.index = index


class EmptyStreamError(GeovoteError, ValueError):
    """An evaluation run received no instances at all."""


class ParseError(GeovoteError, ValueError):
    """A malformed row in a delimited input file."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class SchemaError(GeovoteError, ValueError):
    """Input data that contradicts the declared schema (labels, arity)."""


class ReportIOError(GeovoteError, OSError):
    """Failure writing a report artifact; carries the offending path."""

    def __init__(self, path, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
