"""Deterministic bounded-delay simulation of inconsistent reads.

At inner iteration ``t`` the worker's read is

    x_hat_t = x_t + sum_{t' in K(t)} B_{t'} * delta_{t'}

where ``x_t`` is the true shared vector, ``delta_{t'} = gamma * v_{t'}`` was
subtracted on block ``J(t')``, ``K(t)`` lists the recent updates the read
missed, and ``B_{t'}`` is a 0/1 flag per block coordinate (1 = missing from
the read). Every update is always applied in full to the true vector; the mask
only shapes what reads see.

Conventions:

* ``t`` is the global inner-iteration index, starting at 0.
* ``K(t)`` never reaches back past the start of the current epoch, because the
  epoch barrier publishes every pending write.
* Staleness of a read is ``t - min K(t)`` (0 when ``K(t)`` is empty) and is
  asserted ``<= tau``.
* Delays and masks come from their own generator, seeded by the scenario, so
  the sampler stream matches a sequential run with the same run seed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError, ReplayError
from ..objectives import FiniteSumObjective
from ..optimizers import RunConfig, Trace, _Recorder, check_iterate, record_points, vr_estimate
from ..sampling import Sampler
from ..zo_estimator import full_smoothed_gradient

DELAY_LAWS = ("none", "fixed", "uniform", "schedule")
MASK_POLICIES = ("all-ones", "random", "schedule")
REPLAY_TOL = 1e-12


@dataclass(frozen=True)
class ScheduleRow:
    delay: int
    mask: tuple[int, ...] | None


def load_schedule(path: str | Path, tau: int, Y: int | None = None) -> dict[int, ScheduleRow]:
    """Parse ``t,delay,maskbits`` lines; ``#`` starts a comment.

    ``maskbits`` is a string of 0/1 characters, one per block coordinate, or
    empty. Iterations missing from the file get delay 0 and an all-ones mask.
    """
    rows: dict[int, ScheduleRow] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read schedule {path}: {exc.strerror}", key="schedule") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) not in (2, 3):
            raise ConfigurationError(f"{path}: expected 't,delay,maskbits', got {raw!r}", key="schedule", line=lineno)
        try:
            t, delay = int(parts[0]), int(parts[1])
        except ValueError:
            raise ConfigurationError(f"{path}: non-integer t or delay in {raw!r}", key="schedule", line=lineno) from None
        if t < 0 or delay < 0:
            raise ConfigurationError(f"{path}: negative t or delay", key="schedule", line=lineno)
        if delay > tau:
            raise ConfigurationError(
                f"{path}: delay {delay} at t={t} exceeds tau={tau}", key="schedule", line=lineno
            )
        bits = parts[2] if len(parts) == 3 else ""
        if bits and set(bits) - {"0", "1"}:
            raise ConfigurationError(f"{path}: mask bits must be 0/1, got {bits!r}", key="schedule", line=lineno)
        if bits and Y is not None and len(bits) != Y:
            raise ConfigurationError(
                f"{path}: mask has {len(bits)} bits, block size is {Y}", key="schedule", line=lineno
            )
        if t in rows:
            raise ConfigurationError(f"{path}: duplicate t={t}", key="schedule", line=lineno)
        rows[t] = ScheduleRow(delay, tuple(int(c) for c in bits) if bits else None)
    return rows


@dataclass(frozen=True)
class DelayScenario:
    """Delay bound, delay law and overwrite-mask policy.

    ``delay_law``: ``none``, ``fixed`` (every read misses the last ``delay``
    updates), ``uniform`` (delay drawn from ``0..tau``) or ``schedule``.
    ``mask_policy``: ``all-ones``, ``random`` (each flag is 1 with
    probability ``p_keep``) or ``schedule``.
    """

    tau: int = 0
    delay_law: str = "none"
    delay: int = 0
    mask_policy: str = "all-ones"
    p_keep: float = 1.0
    seed: int = 0
    schedule: dict[int, ScheduleRow] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.tau < 0:
            raise ConfigurationError("tau must be >= 0", key="tau")
        if self.delay_law not in DELAY_LAWS:
            raise ConfigurationError(f"delay_law must be one of {DELAY_LAWS}, got {self.delay_law!r}", key="delay_law")
        if self.mask_policy not in MASK_POLICIES:
            raise ConfigurationError(
                f"mask_policy must be one of {MASK_POLICIES}, got {self.mask_policy!r}", key="mask_policy"
            )
        if self.delay_law == "fixed" and not 0 <= self.delay <= self.tau:
            raise ConfigurationError(f"fixed delay {self.delay} must lie in [0, tau={self.tau}]", key="delay")
        if self.delay_law == "none" and self.mask_policy != "all-ones":
            raise ConfigurationError("delay_law=none requires mask_policy=all-ones", key="mask_policy")
        if not 0.0 <= self.p_keep <= 1.0:
            raise ConfigurationError(f"p_keep must lie in [0, 1], got {self.p_keep}", key="p_keep")
        needs_file = "schedule" in (self.delay_law, self.mask_policy)
        if needs_file and self.schedule is None:
            raise ConfigurationError("a schedule file is required by this scenario", key="schedule")
        if self.schedule is not None:
            for t, row in self.schedule.items():
                if row.delay > self.tau:
                    raise ConfigurationError(f"scheduled delay {row.delay} at t={t} exceeds tau={self.tau}", key="schedule")

    @classmethod
    def from_file(cls, path: str | Path, tau: int, Y: int | None = None, **kw) -> "DelayScenario":
        return cls(tau=tau, schedule=load_schedule(path, tau, Y), **kw)


class _Draws:
    """Delay and mask source for one simulated run."""

    def __init__(self, scenario: DelayScenario):
        self.sc = scenario
        self.rng = np.random.default_rng(np.random.SeedSequence(scenario.seed))

    def delay(self, t: int) -> int:
        sc = self.sc
        if sc.delay_law == "none":
            return 0
        if sc.delay_law == "fixed":
            return sc.delay
        if sc.delay_law == "uniform":
            return int(self.rng.integers(0, sc.tau + 1))
        row = sc.schedule.get(t)
        return row.delay if row is not None else 0

    def mask(self, t: int, Y: int) -> np.ndarray:
        sc = self.sc
        if sc.mask_policy == "random":
            return (self.rng.random(Y) < sc.p_keep).astype(np.int8)
        if sc.mask_policy == "schedule":
            row = sc.schedule.get(t)
            if row is not None and row.mask is not None:
                if len(row.mask) != Y:
                    raise ConfigurationError(f"scheduled mask at t={t} has {len(row.mask)} bits, block size is {Y}", key="schedule")
                return np.array(row.mask, dtype=np.int8)
        return np.ones(Y, dtype=np.int8)


@dataclass
class UpdateLogEntry:
    t: int
    epoch: int
    K: tuple[int, ...]
    J: np.ndarray
    delta: np.ndarray
    mask: np.ndarray
    x_read: np.ndarray
    x_before: np.ndarray

    def __post_init__(self):
        if self.mask.shape != self.J.shape:
            raise ConfigurationError(f"log entry t={self.t}: mask needs one flag per block coordinate")

    @property
    def staleness(self) -> int:
        return self.t - min(self.K) if self.K else 0


@dataclass
class UpdateLog:
    """Every applied update plus the shared vector at each epoch boundary."""

    dim: int
    entries: list[UpdateLogEntry] = field(default_factory=list)
    epoch_starts: list[np.ndarray] = field(default_factory=list)
    epoch_ends: list[np.ndarray] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def save(self, directory: str | Path) -> None:
        """Write ``update_log.csv`` and ``epochs.csv`` (lists are ``;``-joined)."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        with open(d / "update_log.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "epoch", "K", "J", "delta", "mask", "x_read", "x_before"])
            for e in self.entries:
                w.writerow([
                    e.t,
                    e.epoch,
                    _join(e.K),
                    _join(e.J.tolist()),
                    _join(map(repr, e.delta.tolist())),
                    "".join(str(int(b)) for b in e.mask),
                    _join(map(repr, e.x_read.tolist())),
                    _join(map(repr, e.x_before.tolist())),
                ])
        with open(d / "epochs.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "kind", "x"])
            for s, x in enumerate(self.epoch_starts):
                w.writerow([s, "start", _join(map(repr, x.tolist()))])
            for s, x in enumerate(self.epoch_ends):
                w.writerow([s, "end", _join(map(repr, x.tolist()))])

    @classmethod
    def load(cls, directory: str | Path) -> "UpdateLog":
        d = Path(directory)
        starts: dict[int, np.ndarray] = {}
        ends: dict[int, np.ndarray] = {}
        try:
            with open(d / "epochs.csv", newline="") as fh:
                rows = list(csv.reader(fh))[1:]
            for s, kind, x in rows:
                (starts if kind == "start" else ends)[int(s)] = _floats(x)
            with open(d / "update_log.csv", newline="") as fh:
                rows = list(csv.reader(fh))[1:]
        except OSError as exc:
            raise ConfigurationError(f"cannot read update log in {d}: {exc.strerror}") from None
        dim = next(iter(starts.values())).size if starts else 0
        log = cls(dim, epoch_starts=[starts[k] for k in sorted(starts)], epoch_ends=[ends[k] for k in sorted(ends)])
        for lineno, (t, s, K, J, delta, mask, x_read, x_before) in enumerate(rows, start=2):
            try:
                log.entries.append(
                    UpdateLogEntry(
                        int(t),
                        int(s),
                        tuple(int(k) for k in K.split(";") if k),
                        np.array([int(j) for j in J.split(";")], dtype=np.int64),
                        _floats(delta),
                        np.array([int(c) for c in mask], dtype=np.int8),
                        _floats(x_read),
                        _floats(x_before),
                    )
                )
            except ValueError as exc:
                raise ConfigurationError(f"{d / 'update_log.csv'}: {exc}", line=lineno) from None
        return log


def _join(items) -> str:
    return ";".join(str(v) for v in items)


def _floats(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.split(";")], dtype=np.float64)


def _missing_writes(x: np.ndarray, pending: list[UpdateLogEntry]) -> np.ndarray:
    out = x.copy()
    for e in pending:
        out[e.J] += e.mask * e.delta
    return out


def run_simulated(
    obj: FiniteSumObjective,
    cfg: RunConfig,
    scenario: DelayScenario,
) -> tuple[np.ndarray, Trace, UpdateLog]:
    """DSZOVR where each read misses a scenario-chosen set of recent updates.

    Single-threaded and deterministic. With ``tau = 0`` every read is exact
    and the trajectory equals :func:`~zovr.optimizers.run_dszovr`.
    """
    if cfg.algorithm != "dszovr":
        raise ConfigurationError("the simulated backend runs algorithm=dszovr only", key="algorithm")
    cfg.validate_for(obj)
    mu = cfg.schedule(obj.dim)
    sampler = Sampler(cfg.seed, 0)
    draws = _Draws(scenario)
    due = record_points(cfg, cfg.S * cfg.m)
    N, l = obj.dim, obj.n_components
    rec = _Recorder(obj, f"simulated-tau{scenario.tau}")
    log = UpdateLog(N)
    x = cfg.initial_point(N)
    evals = 0
    g = 0
    rec.record(0, 0, 0, x, evals)
    for s in range(cfg.S):
        if cfg.m == 0:
            break
        log.epoch_starts.append(x.copy())
        snap = full_smoothed_gradient(obj, x, mu, epoch=s)
        evals += 2 * N * l
        first = len(log.entries)
        for t in range(cfg.m):
            d = min(draws.delay(g), t)
            pending = log.entries[len(log.entries) - d :] if d else []
            K = tuple(e.t for e in pending)
            if K and g - K[0] > scenario.tau:
                raise AssertionError(f"staleness {g - K[0]} exceeds tau={scenario.tau} at t={g}")
            x_hat = _missing_writes(x, pending)
            B = sampler.minibatch(l, cfg.b)
            J = sampler.block(N, cfg.Y)
            v = vr_estimate(obj, x_hat, snap, B, J, mu, epoch=s, it=t)
            delta = cfg.gamma * v.values
            log.entries.append(UpdateLogEntry(g, s, K, v.block, delta, draws.mask(g, J.size), x_hat, x.copy()))
            x = x.copy()
            x[v.block] = x[v.block] - delta
            evals += 4 * B.size * J.size
            g += 1
            check_iterate(x, g, rec.trace)
            if due(g) or t + 1 == cfg.m:
                rec.record(s, t + 1, g, x, evals)
        assert len(log.entries) - first == cfg.m
        log.epoch_ends.append(x.copy())
    return x, rec.trace, log


@dataclass(frozen=True)
class ReplayReport:
    entries: int
    max_error: float
    max_staleness: int
    tau: int

    def lines(self) -> list[str]:
        return [
            f"entries = {self.entries}",
            f"max_reconstruction_error = {self.max_error!r}",
            f"max_staleness = {self.max_staleness}",
            f"tau = {self.tau}",
        ]


def replay_check(log: UpdateLog, scenario: DelayScenario, tol: float = REPLAY_TOL) -> ReplayReport:
    """Re-derive every read from the log and verify the missing-update identity.

    For each entry ``t``: ``x_read - sum_{t' in K(t)} B_{t'} delta_{t'}`` must
    equal the true vector ``x_t``; ``x_t - delta_t`` must equal the next true
    vector; ``K(t)`` must lie within the last ``tau`` iterations of the same
    epoch. Raises :class:`ReplayError` at the first offending ``t``.
    """
    by_t = {e.t: e for e in log.entries}
    max_err = 0.0
    max_stale = 0
    entries = log.entries
    for k, e in enumerate(entries):
        if e.K:
            if any(k2 not in by_t or by_t[k2].epoch != e.epoch or not k2 < e.t for k2 in e.K):
                raise ReplayError(f"t={e.t}: K(t)={list(e.K)} names an update outside this epoch's past", t=e.t)
            if e.staleness > scenario.tau:
                raise ReplayError(f"t={e.t}: staleness {e.staleness} exceeds tau={scenario.tau}", t=e.t)
        max_stale = max(max_stale, e.staleness)
        if k == 0 or entries[k - 1].epoch != e.epoch:
            if e.epoch >= len(log.epoch_starts):
                raise ReplayError(f"t={e.t}: no recorded start vector for epoch {e.epoch}", t=e.t)
            err = _maxabs(e.x_before - log.epoch_starts[e.epoch])
            if not err <= tol:
                raise ReplayError(f"t={e.t}: epoch start does not match the logged vector (error {err:.3e})", t=e.t, error=err)
        x_rebuilt = e.x_read.copy()
        for k2 in e.K:
            p = by_t[k2]
            x_rebuilt[p.J] -= p.mask * p.delta
        err = _maxabs(x_rebuilt - e.x_before)
        max_err = max(max_err, err)
        if not err <= tol:
            raise ReplayError(f"t={e.t}: read identity violated (error {err:.3e})", t=e.t, error=err)
        after = e.x_before.copy()
        after[e.J] = after[e.J] - e.delta
        last_in_epoch = k + 1 == len(entries) or entries[k + 1].epoch != e.epoch
        if last_in_epoch:
            nxt = log.epoch_ends[e.epoch] if e.epoch < len(log.epoch_ends) else None
        else:
            nxt = entries[k + 1].x_before
        if nxt is None:
            raise ReplayError(f"t={e.t}: no recorded end vector for epoch {e.epoch}", t=e.t)
        err = _maxabs(after - nxt)
        if not err <= tol:
            raise ReplayError(f"t={e.t}: applied update does not reproduce the next vector (error {err:.3e})", t=e.t, error=err)
    return ReplayReport(len(entries), max_err, max_stale, scenario.tau)


def _maxabs(v: np.ndarray) -> float:
    m = float(np.max(np.abs(v))) if v.size else 0.0
    return m if not math.isnan(m) else math.inf
