"""Exception types shared across the package."""


class ValidationError(ValueError):
    """An input violates a documented precondition or schema range."""


class ShapeError(ValidationError):
    """Array dimensions do not line up."""


class UsageError(RuntimeError):
    """An operation was called out of order (e.g. backward before forward)."""


class CsvParseError(ValueError):
    """A CSV file could not be parsed; carries the offending row/column."""

    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        suffix = f" ({', '.join(loc)})" if loc else ""
        super().__init__(f"{message}{suffix}")


class MissingArtifactError(RuntimeError):
    """A pipeline stage needs an artifact that an earlier command produces."""

    def __init__(self, path, produced_by):
        self.path = path
        self.produced_by = produced_by
        super().__init__(f"missing {path}; run `routekd {produced_by}` first")
