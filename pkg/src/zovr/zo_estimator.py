"""Two-point coordinate-block gradient estimators.

Scale convention: a block estimate carries the factor ``N/Y`` so that its
average over all size-``Y`` blocks is the plain central-difference vector.
Snapshots store that vector unscaled; :func:`restrict_snapshot` re-applies
``N/Y``. Every quantity mixed inside one variance-reduced estimate is
therefore on the same scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import ConfigurationError
from .objectives import FiniteSumObjective


@dataclass(frozen=True)
class SmoothingSchedule:
    """Per-coordinate smoothing radii, all strictly positive."""

    mu: np.ndarray

    def __post_init__(self):
        mu = np.array(self.mu, dtype=np.float64).reshape(-1)
        if mu.size == 0 or not np.all(np.isfinite(mu)) or np.any(mu <= 0):
            raise ConfigurationError("smoothing radii must be finite and > 0", key="mu")
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)

    @classmethod
    def constant(cls, value: float, dim: int) -> "SmoothingSchedule":
        return cls(np.full(dim, float(value)))

    @classmethod
    def coerce(cls, mu, dim: int) -> "SmoothingSchedule":
        if isinstance(mu, SmoothingSchedule):
            sched = mu
        elif np.ndim(mu) == 0:
            sched = cls.constant(float(mu), dim)
        else:
            sched = cls(mu)
        if sched.mu.shape != (dim,):
            raise ConfigurationError(f"mu has {sched.mu.size} entries, expected {dim}", key="mu")
        return sched

    def __len__(self) -> int:
        return self.mu.size


@dataclass(frozen=True)
class BlockGradient:
    """Sparse vector supported on ``block``; ``values`` already include ``N/Y``."""

    block: np.ndarray
    values: np.ndarray
    dim: int
    scale_convention: str = "N/Y"

    def dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.block] = self.values
        return out


@dataclass(frozen=True)
class SnapshotGradient:
    g_mu: np.ndarray
    snapshot_x: np.ndarray
    epoch: int = 0


def check_block(block: Iterable[int], dim: int) -> np.ndarray:
    """Validate a coordinate block and return it as a sorted int64 array."""
    J = np.asarray(block, dtype=np.int64).reshape(-1)
    if J.size == 0:
        raise ConfigurationError("coordinate block is empty", key="Y")
    J = np.sort(J)
    if J[0] < 0 or J[-1] >= dim:
        raise ConfigurationError(f"coordinate block {J.tolist()} outside [0, {dim})")
    if J.size > 1 and np.any(J[1:] == J[:-1]):
        raise ConfigurationError(f"coordinate block {J.tolist()} has duplicates")
    return J


def _check_mu(mu_j: float) -> float:
    if not mu_j > 0:
        raise ConfigurationError(f"smoothing radius must be > 0, got {mu_j}", key="mu")
    return float(mu_j)


def central_diff(obj: FiniteSumObjective, i: int, x: np.ndarray, j: int, mu_j: float) -> float:
    """``(f_i(x + mu_j e_j) - f_i(x - mu_j e_j)) / (2 mu_j)``; two evaluations."""
    mu_j = _check_mu(mu_j)
    x = np.asarray(x, dtype=np.float64)
    if not 0 <= j < obj.dim:
        raise ConfigurationError(f"coordinate {j} outside [0, {obj.dim})")
    pts = np.stack([x, x])
    pts[0, j] += mu_j
    pts[1, j] -= mu_j
    vals = obj.eval_pairs(np.array([i, i], dtype=np.int64), pts)
    return float((vals[0] - vals[1]) / (2.0 * mu_j))


def _block_differences(
    obj: FiniteSumObjective,
    components: np.ndarray,
    x: np.ndarray,
    J: np.ndarray,
    mu: np.ndarray,
) -> np.ndarray:
    """Unscaled central differences, shape ``(len(components), len(J))``.

    All ``2 * |components| * |J|`` points go to the objective in one call.
    Row ``k`` only depends on ``components[k]``, never on the batch shape.
    """
    nb, Y, N = len(components), len(J), x.size
    h = mu[J]
    offsets = np.zeros((2 * Y, N))
    cols = np.arange(Y)
    offsets[cols, J] = h
    offsets[Y + cols, J] = -h
    pts = x + offsets
    if nb > 1:
        pts = np.tile(pts, (nb, 1))
    idx = np.repeat(components, 2 * Y)
    vals = obj.eval_pairs(idx, pts).reshape(nb, 2 * Y)
    return (vals[:, :Y] - vals[:, Y:]) / (2.0 * h)


def block_gradient(
    obj: FiniteSumObjective,
    i: int,
    x: np.ndarray,
    block: Iterable[int],
    mu: SmoothingSchedule,
) -> BlockGradient:
    """``G_J(x; f_i)``: ``(N/Y)`` times the central difference on each ``j in J``."""
    mu = SmoothingSchedule.coerce(mu, obj.dim)
    J = check_block(block, obj.dim)
    x = np.asarray(x, dtype=np.float64)
    diffs = _block_differences(obj, np.array([i], dtype=np.int64), x, J, mu.mu)[0]
    return BlockGradient(J, (obj.dim / J.size) * diffs, obj.dim)


def batch_block_mean(
    obj: FiniteSumObjective,
    batch: np.ndarray,
    x: np.ndarray,
    J: np.ndarray,
    mu: np.ndarray,
) -> np.ndarray:
    """``(1/|B|) sum_{i in B} G_J(x; f_i)`` on the block, summed in batch order."""
    diffs = _block_differences(obj, batch, x, J, mu)
    scale = obj.dim / J.size
    acc = diffs[0].copy()
    for row in diffs[1:]:
        acc += row
    return scale * (acc / len(batch))


def component_differences(
    obj: FiniteSumObjective,
    components: np.ndarray,
    x: np.ndarray,
    mu: SmoothingSchedule,
) -> np.ndarray:
    """Dense central-difference rows for the given components, shape ``(k, N)``."""
    mu = SmoothingSchedule.coerce(mu, obj.dim)
    all_coords = np.arange(obj.dim, dtype=np.int64)
    comps = np.asarray(components, dtype=np.int64)
    if comps.size == 0:
        return np.empty((0, obj.dim))
    return _block_differences(obj, comps, np.asarray(x, dtype=np.float64), all_coords, mu.mu)


def snapshot_from_rows(rows: np.ndarray, x: np.ndarray, epoch: int = 0) -> SnapshotGradient:
    """Average per-component rows sequentially in component order.

    The fixed order makes the result independent of how the rows were produced
    (one caller or several cooperating workers).
    """
    acc = rows[0].copy()
    for row in rows[1:]:
        acc += row
    g = acc / rows.shape[0]
    return SnapshotGradient(g_mu=g, snapshot_x=np.array(x, dtype=np.float64), epoch=epoch)


def full_smoothed_gradient(
    obj: FiniteSumObjective,
    x: np.ndarray,
    mu: SmoothingSchedule,
    epoch: int = 0,
    chunk: int = 256,
) -> SnapshotGradient:
    """Dense central-difference gradient of the full objective; ``2 N l`` evaluations."""
    x = np.asarray(x, dtype=np.float64)
    rows = np.empty((obj.n_components, obj.dim))
    for start in range(0, obj.n_components, chunk):
        comps = np.arange(start, min(start + chunk, obj.n_components), dtype=np.int64)
        rows[comps] = component_differences(obj, comps, x, mu)
    return snapshot_from_rows(rows, x, epoch)


def restrict_snapshot(snap: SnapshotGradient, block: Iterable[int]) -> BlockGradient:
    """``G_J(x_tilde; f)`` reused from the snapshot; no evaluations."""
    dim = snap.g_mu.size
    J = check_block(block, dim)
    return BlockGradient(J, (dim / J.size) * snap.g_mu[J], dim)


def dense_central_difference(obj: FiniteSumObjective, x: np.ndarray, mu) -> np.ndarray:
    """Convenience: the full-objective central-difference vector at ``x``."""
    return full_smoothed_gradient(obj, x, SmoothingSchedule.coerce(mu, obj.dim)).g_mu
