"""Exception types shared across the toolkit."""


class SpecdetError(Exception):
    """Base class for toolkit errors."""


class TraceFormatError(SpecdetError):
    """A counter trace file is malformed or violates sample invariants."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line


class ModelFormatError(SpecdetError):
    """A model or embedding file cannot be read (version, corruption)."""


class SchemaError(SpecdetError):
    """An input does not match the feature schema a model expects."""


class CapabilityError(SpecdetError):
    """Live counter collection is unavailable on this host."""

    def __init__(self, message: str, hint: str = ""):
        super().__init__(message if not hint else f"{message} ({hint})")
        self.hint = hint
