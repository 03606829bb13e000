"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class CapExceededError(RuntimeError):
    """Generation would materialize more cells than the configured cap."""

    def __init__(self, level, projected, cap):
        self.level = level
        self.projected = projected
        self.cap = cap
        super().__init__(
            f"level {level}: expected cell count {projected:.4g} exceeds cap {cap:.4g}"
        )


class UnsupportedError(DomainError):
    """The requested quantity has no definition for these parameters."""


class ParseError(ValueError):
    """A serialized file could not be decoded."""

    def __init__(self, msg, line=None, offset=None):
        self.line = line
        self.offset = offset
        where = ""
        if line is not None:
            where = f" (line {line}, offset {offset})"
        super().__init__(msg + where)
