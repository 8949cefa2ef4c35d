"""Exception hierarchy shared by every solver module."""

from __future__ import annotations


class BDSDEError(Exception):
    """Base class for all library errors."""

    step: int | None = None
    path: int | None = None

    def with_context(self, *, step: int | None = None, path: int | None = None) -> "BDSDEError":
        if step is not None and self.step is None:
            self.step = step
        if path is not None and self.path is None:
            self.path = path
        return self

    def __str__(self) -> str:
        msg = super().__str__()
        ctx = []
        if self.path is not None:
            ctx.append(f"path={self.path}")
        if self.step is not None:
            ctx.append(f"step={self.step}")
        return f"{msg} [{', '.join(ctx)}]" if ctx else msg


class InvalidArgumentError(BDSDEError, ValueError):
    pass


class InvalidInputError(BDSDEError, ValueError):
    """Non-finite or malformed sample data; ``index`` points at the first offender."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class UnsupportedDimensionError(BDSDEError, ValueError):
    pass


class OutOfDomainError(BDSDEError, ValueError):
    pass


class MeshTooCoarseError(BDSDEError, ValueError):
    pass


class NumericOverflowError(BDSDEError, FloatingPointError):
    def __init__(self, message: str, path: int | None = None, step: int | None = None):
        super().__init__(message)
        self.path = path
        self.step = step


class NoConvergenceError(BDSDEError, RuntimeError):
    pass


class ResourceLimitError(BDSDEError, RuntimeError):
    pass
