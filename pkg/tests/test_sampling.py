import itertools
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from zovr.errors import ConfigurationError
from zovr.sampling import Sampler, sample_block, sample_minibatch, worker_samplers

DRAWS = 60000


def test_full_batch():
    np.testing.assert_array_equal(sample_minibatch(Sampler(1), 7, 7), np.arange(7))


def test_full_block():
    np.testing.assert_array_equal(sample_block(Sampler(1), 5, 5), np.arange(5))


def test_singleton_marginals_uniform():
    s = Sampler(123)
    counts = np.bincount([int(sample_minibatch(s, 6, 1)[0]) for _ in range(DRAWS)], minlength=6)
    sd = np.sqrt(DRAWS * (1 / 6) * (5 / 6))
    assert np.all(np.abs(counts - DRAWS / 6) <= 3 * sd)
    assert stats.chisquare(counts).pvalue > 1e-3


def test_block_subsets_uniform():
    s = Sampler(321)
    subsets = list(itertools.combinations(range(4), 2))
    counts = Counter(tuple(sample_block(s, 4, 2).tolist()) for _ in range(DRAWS))
    assert set(counts) == set(subsets)
    freq = np.array([counts[k] for k in subsets])
    sd = np.sqrt(DRAWS * (1 / 6) * (5 / 6))
    assert np.all(np.abs(freq - DRAWS / 6) <= 3 * sd)
    assert stats.chisquare(freq).pvalue > 1e-3


def test_minibatch_subsets_uniform():
    s = Sampler(99)
    subsets = list(itertools.combinations(range(5), 2))
    counts = Counter(tuple(sample_minibatch(s, 5, 2).tolist()) for _ in range(20000))
    assert stats.chisquare([counts[k] for k in subsets]).pvalue > 1e-3


def test_replay_is_identical():
    a, b = Sampler(5), Sampler(5)
    for _ in range(50):
        np.testing.assert_array_equal(a.minibatch(10, 3), b.minibatch(10, 3))
        np.testing.assert_array_equal(a.block(8, 2), b.block(8, 2))


def test_streams_differ():
    a, b = Sampler(5, 0), Sampler(5, 1)
    assert any(not np.array_equal(a.minibatch(100, 5), b.minibatch(100, 5)) for _ in range(5))


def test_interleaving_does_not_change_a_stream():
    solo = Sampler(8, 2)
    alone = [solo.minibatch(20, 4) for _ in range(30)]
    workers = worker_samplers(8, 4)
    mixed = []
    for k in range(30):
        for w in (0, 1, 3):
            workers[w].block(10, 3)
        mixed.append(workers[2].minibatch(20, 4))
    for x, y in zip(alone, mixed):
        np.testing.assert_array_equal(x, y)


def test_worker_zero_is_sequential_stream():
    a = worker_samplers(3, 4)[0]
    b = Sampler(3)
    np.testing.assert_array_equal(a.block(9, 4), b.block(9, 4))


def test_counters():
    s = Sampler(0)
    s.minibatch(4, 2)
    s.block(4, 1)
    s.block(4, 1)
    assert (s.batch_draws, s.block_draws) == (1, 2)


@pytest.mark.parametrize("l,b", [(3, 4), (3, 0)])
def test_bad_batch(l, b):
    with pytest.raises(ConfigurationError, match="b"):
        sample_minibatch(Sampler(0), l, b)


def test_bad_block():
    with pytest.raises(ConfigurationError):
        sample_block(Sampler(0), 3, 4)


@given(seed=st.integers(0, 2**32), pop=st.integers(1, 200), data=st.data())
def test_draws_are_sorted_distinct_in_range(seed, pop, data):
    size = data.draw(st.integers(1, pop))
    out = Sampler(seed).minibatch(pop, size)
    assert out.size == size
    assert np.all(np.diff(out) > 0)
    assert out[0] >= 0 and out[-1] < pop
