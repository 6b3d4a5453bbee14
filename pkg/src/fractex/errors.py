"""Exception hierarchy shared by the library and the CLI."""

from pathlib import Path


class FractexError(Exception):
    """Base class for every expected failure raised by fractex."""


class ParameterError(FractexError, ValueError):
    """A parameter is outside its valid range."""


class DegenerateInputError(ParameterError):
    """The input carries no usable signal (e.g. a constant field)."""


class StructureError(FractexError, ValueError):
    """Shapes, architectures or caches do not fit together."""

    def __init__(self, message: str, stage: str | None = None) -> None:
        self.stage = stage
        super().__init__(f"[{stage}] {message}" if stage else message)


class DataError(FractexError):
    """A file or array payload is malformed."""

    def __init__(self, message: str, path: Path | str | None = None, field: str | None = None) -> None:
        self.path = Path(path) if path is not None else None
        self.field = field
        parts = []
        if path is not None:
            parts.append(str(path))
        if field is not None:
            parts.append(f"field '{field}'")
        prefix = ": ".join(parts)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class ConfigError(DataError):
    """The run configuration could not be parsed or validated."""


class NumericalError(FractexError, ArithmeticError):
    """A computation produced non-finite values or diverged."""

    def __init__(self, message: str, stage: str | None = None, step: int | None = None) -> None:
        self.stage = stage
        self.step = step
        tags = []
        if stage is not None:
            tags.append(f"stage {stage}")
        if step is not None:
            tags.append(f"step {step}")
        super().__init__(f"{message} ({', '.join(tags)})" if tags else message)
