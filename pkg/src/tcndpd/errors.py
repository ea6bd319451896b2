"""Exception types shared across the package."""

from __future__ import annotations


class TcnDpdError(Exception):
    """Base class for every error raised by tcndpd."""


class ConfigError(TcnDpdError, ValueError):
    """Invalid configuration (kernel size, budget, ratios, ...)."""


class ShapeError(TcnDpdError, ValueError):
    """Array shapes disagree. ``dimension`` names the offending axis."""

    def __init__(self, dimension: str, expected, got):
        self.dimension = dimension
        self.expected = expected
        self.got = got
        super().__init__(f"shape mismatch in {dimension}: expected {expected}, got {got}")


class NonFiniteError(TcnDpdError, FloatingPointError):
    """A NaN/Inf appeared where finite values are required."""

    def __init__(self, what: str):
        self.what = what
        super().__init__(f"non-finite values in {what}")


class ParseError(TcnDpdError, ValueError):
    """Malformed dataset or model file. ``row`` is 1-based when known."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class RankDeficientError(TcnDpdError, ValueError):
    pass


class DivergenceError(TcnDpdError, FloatingPointError):
    """Training loss became non-finite."""

    def __init__(self, epoch: int, last_good_epoch: int):
        self.epoch = epoch
        self.last_good_epoch = last_good_epoch
        super().__init__(
            f"training diverged at epoch {epoch}; last good epoch {last_good_epoch}"
        )
