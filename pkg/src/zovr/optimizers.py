"""Sequential DSZOVR and the AsySZO baseline, plus the shared estimate/update rules."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterator, NamedTuple

import numpy as np

from .errors import ConfigurationError, DivergenceError, StaleSnapshotError
from .objectives import FiniteSumObjective
from .sampling import Sampler
from .zo_estimator import (
    SmoothingSchedule,
    SnapshotGradient,
    batch_block_mean,
    check_block,
    full_smoothed_gradient,
)

DIVERGENCE_LIMIT = 1e12
TRACE_HEADER = ("epoch", "iter", "global_iter", "f", "grad_norm_sq", "evals", "wall_ms")


@dataclass(frozen=True)
class RunConfig:
    gamma: float
    S: int
    m: int
    b: int = 1
    Y: int = 1
    mu: float | np.ndarray | SmoothingSchedule = 1e-4
    seed: int = 0
    algorithm: str = "dszovr"
    gamma0: float | None = None
    trace_every: int | None = None
    trace_per_decade: int | None = None
    x0: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.algorithm not in ("dszovr", "asyszo"):
            raise ConfigurationError(f"unknown algorithm {self.algorithm!r}", key="algorithm")
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ConfigurationError(f"gamma must be > 0, got {self.gamma}", key="gamma")
        if self.gamma0 is not None and not self.gamma0 > 0:
            raise ConfigurationError(f"gamma0 must be > 0, got {self.gamma0}", key="gamma0")
        for key in ("S", "b", "Y"):
            if getattr(self, key) < 1:
                raise ConfigurationError(f"{key} must be >= 1", key=key)
        # m = 0 is accepted as a degenerate no-op run.
        if self.m < 0:
            raise ConfigurationError("m must be >= 0", key="m")
        if self.trace_every is not None and self.trace_every < 1:
            raise ConfigurationError("trace_every must be >= 1", key="trace_every")
        if self.trace_per_decade is not None and self.trace_per_decade < 1:
            raise ConfigurationError("trace_per_decade must be >= 1", key="trace_per_decade")

    def schedule(self, dim: int) -> SmoothingSchedule:
        return SmoothingSchedule.coerce(self.mu, dim)

    def validate_for(self, obj: FiniteSumObjective) -> None:
        if self.b > obj.n_components:
            raise ConfigurationError(f"b={self.b} exceeds l={obj.n_components}", key="b")
        if self.Y > obj.dim:
            raise ConfigurationError(f"Y={self.Y} exceeds N={obj.dim}", key="Y")
        self.schedule(obj.dim)
        if self.x0 is not None and np.shape(self.x0) != (obj.dim,):
            raise ConfigurationError(f"x0 must have length {obj.dim}", key="x0")

    def initial_point(self, dim: int) -> np.ndarray:
        if self.x0 is None:
            return np.zeros(dim)
        return np.array(self.x0, dtype=np.float64)

    def with_(self, **changes) -> "RunConfig":
        return replace(self, **changes)


class TraceRecord(NamedTuple):
    epoch: int
    iter: int
    global_iter: int
    f: float
    grad_norm_sq: float
    evals: int
    wall_ms: float


class Trace:
    """Ordered telemetry records; ``global_iter`` strictly increases."""

    def __init__(self, records: list[TraceRecord] | None = None, label: str = ""):
        self.records: list[TraceRecord] = list(records or [])
        self.label = label

    def append(self, rec: TraceRecord) -> None:
        if self.records:
            last = self.records[-1]
            if rec.global_iter <= last.global_iter:
                raise ValueError("trace global_iter must strictly increase")
            if rec.evals < last.evals:
                raise ValueError("trace evaluation counter must not decrease")
        self.records.append(rec)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[TraceRecord]:
        return iter(self.records)

    def __getitem__(self, k):
        return self.records[k]

    def column(self, name: str) -> np.ndarray:
        k = TRACE_HEADER.index(name)
        return np.array([r[k] for r in self.records], dtype=np.float64)

    def to_csv(self, path: str | Path, wall_clock: bool = True) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_HEADER)
            for r in self.records:
                wall = repr(float(r.wall_ms)) if wall_clock else "0.0"
                w.writerow(
                    [r.epoch, r.iter, r.global_iter, repr(float(r.f)), repr(float(r.grad_norm_sq)), r.evals, wall]
                )

    @classmethod
    def from_csv(cls, path: str | Path) -> "Trace":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if tuple(header or ()) != TRACE_HEADER:
                raise ConfigurationError(f"{path}: trace header must be {','.join(TRACE_HEADER)}", line=1)
            recs = []
            for row in reader:
                e, t, g, f, gn, ev, wall = row
                recs.append(TraceRecord(int(e), int(t), int(g), float(f), float(gn), int(ev), float(wall)))
        return cls(recs, label=Path(path).stem)


def telemetry_gradient(obj: FiniteSumObjective, x: np.ndarray) -> np.ndarray:
    """Analytic gradient when available, else dense central differences at mu=1e-5."""
    if obj.has_analytic_gradient:
        return obj.gradient(x)
    return full_smoothed_gradient(obj, x, SmoothingSchedule.constant(1e-5, obj.dim)).g_mu


class _Recorder:
    def __init__(self, obj: FiniteSumObjective, label: str):
        self.obj = obj
        self.trace = Trace(label=label)
        self._t0 = time.perf_counter()

    def record(self, epoch: int, it: int, g: int, x: np.ndarray, evals: int) -> None:
        f = self.obj.value(x)
        grad = telemetry_gradient(self.obj, x)
        gn = float(grad @ grad)
        wall = (time.perf_counter() - self._t0) * 1e3
        self.trace.append(TraceRecord(epoch, it, g, f, gn, evals, wall))
        if not (math.isfinite(f) and abs(f) <= DIVERGENCE_LIMIT):
            raise DivergenceError(f"objective left the finite range at iteration {g}: f={f}", self.trace, x)


def check_iterate(x: np.ndarray, g: int, trace: Trace | None) -> None:
    top = float(np.max(np.abs(x))) if x.size else 0.0
    if not (math.isfinite(top) and top <= DIVERGENCE_LIMIT):
        raise DivergenceError(f"iterate left the finite range at iteration {g}: max|x|={top}", trace, x)


@dataclass(frozen=True)
class VREstimate:
    block: np.ndarray
    values: np.ndarray
    batch: np.ndarray
    epoch: int
    iter: int = -1

    def dense(self, dim: int) -> np.ndarray:
        out = np.zeros(dim)
        out[self.block] = self.values
        return out


def vr_estimate(
    obj: FiniteSumObjective,
    x_hat: np.ndarray,
    snap: SnapshotGradient,
    batch,
    block,
    mu,
    *,
    epoch: int | None = None,
    it: int = -1,
) -> VREstimate:
    """Variance-reduced block estimate at the (possibly stale) read ``x_hat``.

    ``mean_B G_J(x_hat) - mean_B G_J(x_tilde) + (N/Y) g_mu[J]``; costs
    ``4 |B| |J|`` evaluations. At ``x_hat == x_tilde`` the two batch terms are
    bitwise equal, so the result is exactly the restricted snapshot.
    """
    if epoch is not None and epoch != snap.epoch:
        raise StaleSnapshotError(f"snapshot from epoch {snap.epoch} used in epoch {epoch}")
    mu = SmoothingSchedule.coerce(mu, obj.dim)
    J = check_block(block, obj.dim)
    B = np.asarray(batch, dtype=np.int64).reshape(-1)
    if B.size == 0:
        raise ConfigurationError("mini-batch is empty", key="b")
    x_hat = np.asarray(x_hat, dtype=np.float64)
    at_read = batch_block_mean(obj, B, x_hat, J, mu.mu)
    at_snapshot = batch_block_mean(obj, B, snap.snapshot_x, J, mu.mu)
    anchor = (obj.dim / J.size) * snap.g_mu[J]
    values = (at_read - at_snapshot) + anchor
    return VREstimate(J, values, B, snap.epoch, it)


def apply_update(x: np.ndarray, v: VREstimate, gamma: float) -> np.ndarray:
    """Return a copy of ``x`` with ``x_J -= gamma * v`` and other coordinates untouched."""
    out = np.array(x, dtype=np.float64)
    out[v.block] = out[v.block] - gamma * v.values
    return out


def record_points(cfg: RunConfig, total: int) -> Callable[[int], bool]:
    """Predicate on global iteration: should telemetry be taken after it?

    ``trace_per_decade`` places records at ``ceil(10**(k/d))``, which keeps a
    log-log fit evenly weighted; otherwise every ``trace_every`` iterations
    (default: once per epoch). The last iteration is always recorded.
    """
    if cfg.trace_per_decade is not None:
        d = cfg.trace_per_decade
        top = math.log10(max(total, 1)) * d
        marks = {int(math.ceil(10 ** (k / d))) for k in range(int(top) + 1)}
        marks.add(total)
        return marks.__contains__
    every = cfg.trace_every if cfg.trace_every is not None else max(cfg.m, 1)
    return lambda g: g % every == 0 or g == total


def run_dszovr(
    obj: FiniteSumObjective,
    cfg: RunConfig,
    on_epoch: Callable[[int, np.ndarray], None] | None = None,
) -> tuple[np.ndarray, Trace]:
    """Variance-reduced doubly stochastic zeroth-order descent, one worker.

    Each epoch snapshots ``x``, builds the full smoothed gradient (``2 N l``
    evaluations), then runs ``m`` sample/estimate/update steps. The last inner
    iterate starts the next epoch.
    """
    if cfg.algorithm != "dszovr":
        raise ConfigurationError(f"run_dszovr needs algorithm=dszovr, got {cfg.algorithm!r}", key="algorithm")
    cfg.validate_for(obj)
    mu = cfg.schedule(obj.dim)
    sampler = Sampler(cfg.seed, 0)
    due = record_points(cfg, cfg.S * cfg.m)
    N, l = obj.dim, obj.n_components
    rec = _Recorder(obj, "dszovr")
    x = cfg.initial_point(N)
    evals = 0
    g = 0
    rec.record(0, 0, 0, x, evals)
    for s in range(cfg.S):
        if cfg.m == 0:
            break
        snap = full_smoothed_gradient(obj, x, mu, epoch=s)
        evals += 2 * N * l
        for t in range(cfg.m):
            x_hat = x.copy()
            B = sampler.minibatch(l, cfg.b)
            J = sampler.block(N, cfg.Y)
            v = vr_estimate(obj, x_hat, snap, B, J, mu, epoch=s, it=t)
            x = apply_update(x, v, cfg.gamma)
            evals += 4 * B.size * J.size
            g += 1
            check_iterate(x, g, rec.trace)
            if due(g) or t + 1 == cfg.m:
                rec.record(s, t + 1, g, x, evals)
        if on_epoch is not None:
            on_epoch(s, x)
    return x, rec.trace


def run_asyszo_sequential(obj: FiniteSumObjective, cfg: RunConfig) -> tuple[np.ndarray, Trace]:
    """Single-loop baseline: ``x_J -= gamma0 / sqrt(t+1) * G_J(x; f_i)``, ``S*m`` steps."""
    if cfg.algorithm != "asyszo":
        raise ConfigurationError(f"run_asyszo_sequential needs algorithm=asyszo, got {cfg.algorithm!r}", key="algorithm")
    cfg.validate_for(obj)
    mu = cfg.schedule(obj.dim)
    gamma0 = cfg.gamma0 if cfg.gamma0 is not None else cfg.gamma
    sampler = Sampler(cfg.seed, 0)
    total = cfg.S * cfg.m
    due = record_points(cfg, total)
    N, l = obj.dim, obj.n_components
    rec = _Recorder(obj, "asyszo")
    x = cfg.initial_point(N)
    evals = 0
    rec.record(0, 0, 0, x, evals)
    for t in range(total):
        i = sampler.minibatch(l, 1)
        J = sampler.block(N, cfg.Y)
        step = gamma0 / math.sqrt(t + 1)
        grad_J = batch_block_mean(obj, i, x, J, mu.mu)
        x = x.copy()
        x[J] = x[J] - step * grad_J
        evals += 2 * J.size
        g = t + 1
        check_iterate(x, g, rec.trace)
        if due(g):
            s, it = divmod(t, cfg.m)
            rec.record(s, it + 1, g, x, evals)
    return x, rec.trace


def run(obj: FiniteSumObjective, cfg: RunConfig) -> tuple[np.ndarray, Trace]:
    if cfg.algorithm == "dszovr":
        return run_dszovr(obj, cfg)
    return run_asyszo_sequential(obj, cfg)
