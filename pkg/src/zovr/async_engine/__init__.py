"""Lock-free threaded backend and the bounded-delay simulator."""

from .runtime import AsyncStats, run_async
from .shared import AtomicCounter, SharedIterate
from .simulator import DelayScenario, ReplayReport, UpdateLog, UpdateLogEntry, load_schedule, replay_check, run_simulated

__all__ = [
    "AsyncStats",
    "AtomicCounter",
    "DelayScenario",
    "ReplayReport",
    "SharedIterate",
    "UpdateLog",
    "UpdateLogEntry",
    "load_schedule",
    "replay_check",
    "run_async",
    "run_simulated",
]
