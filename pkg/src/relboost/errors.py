"""Exception types shared across the package."""


class RelboostError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(RelboostError):
    """Malformed CSV input; carries a 1-based row/column position when known."""

    def __init__(self, message, row=None, column=None):
        if row is not None and column is not None:
            message = f"{message} (row {row}, column {column})"
        elif row is not None:
            message = f"{message} (row {row})"
        super().__init__(message)
        self.row = row
        self.column = column


class SchemaError(RelboostError):
    """Inconsistent table schema, join spec, or prediction input."""


class CyclicSchemaError(RelboostError):
    """The join schema is not acyclic; carries the irreducible residual."""

    def __init__(self, message, residual=()):
        super().__init__(message)
        self.residual = tuple(residual)


class QueryError(RelboostError):
    """A query references features or tables the schema does not have."""


class DimensionError(RelboostError):
    """Vector operands of mismatched length."""


class ResourceCapError(RelboostError):
    """A materialized join exceeded the configured row cap."""


class ConfigError(RelboostError):
    """Invalid training configuration."""


class ModelFormatError(RelboostError):
    """A model document failed to validate or has an unsupported version."""
