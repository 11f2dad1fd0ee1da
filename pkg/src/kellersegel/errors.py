"""Exception types raised by the library.

Errors split into two families: :class:`ValueError` subclasses for bad input
or violated preconditions, and :class:`ModelError` for numerical failures of a
well-posed run (the CLI maps these to exit codes 2 and 1 respectively).
"""


class ModelError(RuntimeError):
    """A well-posed computation failed numerically."""


class BlowUpError(ModelError):
    pass


class StagnationError(ModelError):
    pass


class NoConvergenceError(ModelError):
    pass


class InvalidIntervalError(ValueError):
    pass


class TooCoarseError(ValueError):
    pass


class NotZeroMeanError(ValueError):
    pass


class UnresolvedError(ValueError):
    pass


class NonpositiveDensityError(ValueError):
    pass


class PreconditionError(ValueError):
    pass


class NotStationaryError(ValueError):
    pass


class NotConvergedError(ValueError):
    pass


class WindowTooShortError(ValueError):
    pass


class NoiseFloorError(ValueError):
    pass


class DegenerateRowError(ValueError):
    pass


class ConfigError(ValueError):
    """Configuration problem tied to a key (and a line, when known)."""

    def __init__(self, kind, key, message, line=None):
        self.kind = kind
        self.key = key
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{kind}: {key}{where}: {message}")


class PositivityLossError(ModelError):
    """A step produced a nonpositive density; the caller should retry with a smaller dt."""
