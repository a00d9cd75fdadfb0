"""Lock-free shared-memory DSZOVR with ``p`` worker threads.

Inner iterations never take a lock on the iterate. A worker reads the shared
vector coordinate by coordinate (the read may mix logical times), computes the
variance-reduced estimate, and subtracts ``gamma * v`` from its block with one
atomic read-modify-write per coordinate. Workers synchronize only at epoch
boundaries, through a barrier.

Iteration tickets come from a shared atomic counter, so each epoch applies
exactly ``m`` updates whatever ``p`` is. The snapshot gradient is built
cooperatively: workers claim chunks of components, and the rows are summed in
component order afterwards, so the snapshot does not depend on ``p``.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import ConfigurationError, DivergenceError, WorkerError
from ..objectives import FiniteSumObjective
from ..optimizers import RunConfig, Trace, _Recorder, check_iterate, vr_estimate
from ..sampling import worker_samplers
from ..zo_estimator import SnapshotGradient, component_differences, snapshot_from_rows
from .shared import AtomicCounter, SharedIterate

SNAPSHOT_CHUNK = 256

#: ``on_iteration(worker, epoch, ticket)``: called after the read and before the write.
IterationHook = Callable[[int, int, int], None]


@dataclass
class AsyncStats:
    """Bookkeeping filled in by :func:`run_async`."""

    updates_per_epoch: list[int] = field(default_factory=list)
    updates_per_worker: list[int] = field(default_factory=list)


class _Run:
    def __init__(self, obj: FiniteSumObjective, cfg: RunConfig, p: int, hook: IterationHook | None):
        self.obj, self.cfg, self.p, self.hook = obj, cfg, p, hook
        self.mu = cfg.schedule(obj.dim)
        self.shared = SharedIterate(cfg.initial_point(obj.dim))
        self.samplers = worker_samplers(cfg.seed, p)
        self.tickets = AtomicCounter()
        self.chunks = AtomicCounter()
        self.applied = AtomicCounter()
        self.rows = np.empty((obj.n_components, obj.dim))
        self.x_tilde = np.empty(obj.dim)
        self.snap: SnapshotGradient | None = None
        self.epoch = 0
        self.evals = 0
        self.rec = _Recorder(obj, f"async-p{p}")
        self.stats = AsyncStats(updates_per_worker=[0] * p)
        self.error: BaseException | None = None
        self.error_lock = threading.Lock()
        self.barrier = threading.Barrier(p)

    # Barrier bodies run on exactly one thread while the others wait.
    def begin_epoch(self) -> None:
        self.shared.read(self.x_tilde)
        self.chunks.store(0)
        self.tickets.store(0)
        self.applied.store(0)

    def finish_snapshot(self) -> None:
        self.snap = snapshot_from_rows(self.rows, self.x_tilde, self.epoch)
        self.evals += 2 * self.obj.dim * self.obj.n_components

    def end_epoch(self) -> None:
        applied = self.applied.load()
        self.stats.updates_per_epoch.append(applied)
        m, b, Y = self.cfg.m, self.cfg.b, self.cfg.Y
        self.evals += 4 * b * Y * applied
        x = self.shared.read()
        g = (self.epoch + 1) * m
        check_iterate(x, g, self.rec.trace)
        self.rec.record(self.epoch, m, g, x, self.evals)
        self.epoch += 1

    def fail(self, exc: BaseException) -> None:
        with self.error_lock:
            if self.error is None:
                self.error = exc
        self.barrier.abort()

    def sync(self, worker: int, body: Callable[[], None]) -> None:
        # Two waits: the body sees every worker parked, and nobody runs ahead of it.
        if self.barrier.wait() == 0:
            try:
                body()
            except BaseException as exc:
                self.fail(exc)
                raise
        self.barrier.wait()

    def snapshot_rows(self) -> None:
        l = self.obj.n_components
        while True:
            start = self.chunks.fetch_add(1) * SNAPSHOT_CHUNK
            if start >= l:
                return
            comps = np.arange(start, min(start + SNAPSHOT_CHUNK, l), dtype=np.int64)
            self.rows[comps] = component_differences(self.obj, comps, self.x_tilde, self.mu)

    def inner(self, worker: int) -> None:
        obj, cfg = self.obj, self.cfg
        sampler = self.samplers[worker]
        x_hat = np.empty(obj.dim)
        s = self.epoch
        while self.error is None:
            t = self.tickets.fetch_add(1)
            if t >= cfg.m:
                return
            self.shared.read(x_hat)
            check_iterate(x_hat, s * cfg.m + t, self.rec.trace)
            B = sampler.minibatch(obj.n_components, cfg.b)
            J = sampler.block(obj.dim, cfg.Y)
            v = vr_estimate(obj, x_hat, self.snap, B, J, self.mu, epoch=s, it=t)
            if self.hook is not None:
                self.hook(worker, s, t)
            self.shared.fetch_sub(v.block, cfg.gamma * v.values)
            self.applied.fetch_add(1)
            self.stats.updates_per_worker[worker] += 1

    def work(self, worker: int) -> None:
        try:
            for _ in range(self.cfg.S):
                self.sync(worker, self.begin_epoch)
                self.snapshot_rows()
                self.sync(worker, self.finish_snapshot)
                self.inner(worker)
                self.sync(worker, self.end_epoch)
        except threading.BrokenBarrierError:
            pass
        except BaseException as exc:
            self.fail(exc)


def run_async(
    obj: FiniteSumObjective,
    cfg: RunConfig,
    p: int,
    on_iteration: IterationHook | None = None,
    stats: AsyncStats | None = None,
) -> tuple[np.ndarray, Trace]:
    """Run DSZOVR on ``p`` lock-free worker threads.

    Telemetry is taken only at epoch boundaries, where the shared vector is
    consistent. With ``p = 1`` the trajectory is bit-identical to
    :func:`~zovr.optimizers.run_dszovr` under the same seed.
    """
    if p < 1:
        raise ConfigurationError(f"worker count must be >= 1, got {p}", key="threads")
    if cfg.algorithm != "dszovr":
        raise ConfigurationError("the async backend runs algorithm=dszovr only", key="algorithm")
    cfg.validate_for(obj)
    run = _Run(obj, cfg, p, on_iteration)
    run.rec.record(0, 0, 0, run.shared.read(), 0)
    if cfg.m > 0:
        threads = [threading.Thread(target=run.work, args=(w,), name=f"zovr-worker-{w}") for w in range(p)]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
    if stats is not None:
        stats.updates_per_epoch = run.stats.updates_per_epoch
        stats.updates_per_worker = run.stats.updates_per_worker
    if run.error is not None:
        exc = run.error
        if isinstance(exc, DivergenceError):
            exc.trace = run.rec.trace
            raise exc
        raise WorkerError(f"worker failed: {type(exc).__name__}: {exc}", run.rec.trace) from exc
    return run.shared.read(), run.rec.trace
