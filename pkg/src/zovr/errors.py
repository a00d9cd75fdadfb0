"""Exception hierarchy shared by every subpackage."""

from __future__ import annotations

from typing import Any


class ZOVRError(Exception):
    """Base class for all library errors."""


class ConfigurationError(ZOVRError, ValueError):
    """Invalid parameters, dimensions, or configuration files."""

    def __init__(self, message: str, *, key: str | None = None, line: int | None = None):
        self.key = key
        self.line = line
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class StaleSnapshotError(ZOVRError, RuntimeError):
    """A snapshot gradient was used outside the epoch it belongs to."""


class DivergenceError(ZOVRError, ArithmeticError):
    """The iterate or objective left the finite range; carries the partial trace."""

    def __init__(self, message: str, trace: Any = None, x: Any = None):
        super().__init__(message)
        self.trace = trace
        self.x = x


class InfeasibleSettingsError(ZOVRError, ValueError):
    """Analysis parameters violate a precondition of the convergence bound."""

    def __init__(self, message: str, *, condition: str, margin: float):
        super().__init__(f"{message}: {condition} (margin {margin:.6g})")
        self.condition = condition
        self.margin = margin


class WorkerError(ZOVRError, RuntimeError):
    """A worker thread failed; the run was aborted with a partial trace."""

    def __init__(self, message: str, trace: Any = None):
        super().__init__(message)
        self.trace = trace


class ReplayError(ZOVRError, AssertionError):
    """An update log failed verification; ``t`` is the first offending iteration."""

    def __init__(self, message: str, *, t: int, error: float = float("nan")):
        super().__init__(f"{message} at t={t}")
        self.t = t
        self.error = error


class FitError(ZOVRError, ValueError):
    """A rate fit could not be performed on the given series."""
