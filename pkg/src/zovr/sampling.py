"""Seeded without-replacement sampling of mini-batches and coordinate blocks.

Streams come from ``numpy.random.SeedSequence(seed, spawn_key=(stream_id,))``
feeding a PCG64 generator, so streams with distinct ids are independent and a
worker's stream never depends on what other workers draw.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError


class Sampler:
    """One per worker; not safe to share between threads."""

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self._rng = np.random.Generator(np.random.PCG64(ss))
        self.batch_draws = 0
        self.block_draws = 0

    def _subset(self, population: int, size: int) -> np.ndarray:
        # Floyd's algorithm: every size-`size` subset is equally likely. The
        # integer draws come from 53-bit uniforms, so the per-value bias is
        # below population * 2**-53.
        if size == population:
            return np.arange(population, dtype=np.int64)
        chosen: set[int] = set()
        for k, u in zip(range(population - size, population), self._rng.random(size).tolist()):
            j = int(u * (k + 1))
            chosen.add(k if j in chosen else j)
        return np.array(sorted(chosen), dtype=np.int64)

    def minibatch(self, l: int, b: int) -> np.ndarray:
        """Uniform size-``b`` subset of ``{0, ..., l-1}``, sorted."""
        if not 1 <= b <= l:
            raise ConfigurationError(f"batch size must satisfy 1 <= b <= l, got b={b}, l={l}", key="b")
        self.batch_draws += 1
        return self._subset(l, b)

    def block(self, N: int, Y: int) -> np.ndarray:
        """Uniform size-``Y`` subset of ``{0, ..., N-1}``, sorted."""
        if not 1 <= Y <= N:
            raise ConfigurationError(f"block size must satisfy 1 <= Y <= N, got Y={Y}, N={N}", key="Y")
        self.block_draws += 1
        return self._subset(N, Y)

    def generator(self) -> np.random.Generator:
        return self._rng


def sample_minibatch(state: Sampler, l: int, b: int) -> np.ndarray:
    return state.minibatch(l, b)


def sample_block(state: Sampler, N: int, Y: int) -> np.ndarray:
    return state.block(N, Y)


def worker_samplers(seed: int, p: int) -> list[Sampler]:
    """Deterministic per-worker streams; worker 0 shares the sequential stream."""
    return [Sampler(seed, w) for w in range(p)]
