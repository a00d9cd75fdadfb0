import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zovr.async_engine.simulator import (
    DelayScenario,
    UpdateLog,
    load_schedule,
    replay_check,
    run_simulated,
)
from zovr.errors import ConfigurationError, ReplayError
from zovr.optimizers import RunConfig, run_dszovr


def cfg_for(ref, **kw):
    base = dict(gamma=0.9 * 4 / (ref.lipschitz * math.sqrt(500)), S=2, m=150, b=2, Y=5, mu=1e-4, seed=4)
    base.update(kw)
    return RunConfig(**base)


def test_tau_zero_is_sequential(ref):
    cfg = cfg_for(ref)
    xs, ts = run_dszovr(ref, cfg)
    x, tr, log = run_simulated(ref, cfg, DelayScenario(0))
    assert np.max(np.abs(x - xs)) <= 1e-12
    assert len(log) == 300
    for e in log.entries:
        assert e.K == () and e.x_read.tobytes() == e.x_before.tobytes()
    assert [r.grad_norm_sq for r in tr] == [r.grad_norm_sq for r in ts]


def test_fixed_delay_one_by_hand(half_square):
    cfg = RunConfig(gamma=0.5, S=1, m=2, b=1, Y=1, mu=0.1, x0=np.array([1.0]))
    x, _, log = run_simulated(half_square, cfg, DelayScenario(1, "fixed", 1))
    first, second = log.entries
    assert first.K == () and first.x_read[0] == 1.0
    assert second.K == (0,)
    # The second read misses the first update and sees x0 again.
    assert second.x_read[0] == pytest.approx(1.0, abs=1e-15)
    assert second.x_before[0] == pytest.approx(0.5, abs=1e-15)
    assert x[0] == pytest.approx(0.0, abs=1e-15)
    assert run_dszovr(half_square, cfg)[0][0] == pytest.approx(0.25, abs=1e-15)


def test_zero_keep_probability_reads_are_current(ref):
    _, _, log = run_simulated(ref, cfg_for(ref), DelayScenario(20, "uniform", mask_policy="random", p_keep=0.0, seed=3))
    assert any(e.K for e in log.entries)
    for e in log.entries:
        assert e.x_read.tobytes() == e.x_before.tobytes()


@pytest.mark.parametrize("tau", [0, 5, 50])
def test_replay_passes_random_masks(ref, tau):
    law = "uniform" if tau else "none"
    mask = "random" if tau else "all-ones"
    sc = DelayScenario(tau, law, mask_policy=mask, p_keep=0.5, seed=tau)
    _, _, log = run_simulated(ref, cfg_for(ref), sc)
    rep = replay_check(log, sc)
    assert rep.max_error <= 1e-12
    assert rep.max_staleness <= tau


def test_fixed_delay_reports_realized_staleness(ref):
    sc = DelayScenario(5, "fixed", 3)
    _, _, log = run_simulated(ref, cfg_for(ref), sc)
    assert replay_check(log, sc).max_staleness == 3


@pytest.mark.parametrize("field", ["delta", "x_read", "mask"])
def test_tampered_entry_fails(ref, field):
    sc = DelayScenario(4, "fixed", 4)
    _, _, log = run_simulated(ref, cfg_for(ref), sc)
    t = 60
    e = log.entries[t]
    if field == "mask":
        e.mask[:] = 0
        first_reader = t + 1
    else:
        getattr(e, field)[0] += 1e-6
        first_reader = t
    with pytest.raises(ReplayError) as err:
        replay_check(log, sc)
    assert err.value.t == first_reader


def test_staleness_beyond_tau_is_rejected(ref):
    sc = DelayScenario(6, "fixed", 6)
    _, _, log = run_simulated(ref, cfg_for(ref), sc)
    with pytest.raises(ReplayError, match="exceeds tau"):
        replay_check(log, DelayScenario(2, "fixed", 2))


def test_delays_reset_at_epoch_boundary(ref):
    cfg = cfg_for(ref, m=20, S=3)
    _, _, log = run_simulated(ref, cfg, DelayScenario(10, "fixed", 10))
    for e in log.entries:
        assert all(k >= e.epoch * cfg.m for k in e.K)


@settings(max_examples=15)
@given(tau=st.integers(0, 12), p_keep=st.floats(0, 1), seed=st.integers(0, 1000))
def test_staleness_never_exceeds_tau(half_square, tau, p_keep, seed):
    law, mask = ("uniform", "random") if tau else ("none", "all-ones")
    sc = DelayScenario(tau, law, mask_policy=mask, p_keep=p_keep, seed=seed)
    cfg = RunConfig(gamma=0.1, S=2, m=25, mu=0.1, seed=seed, x0=np.array([1.0]))
    _, _, log = run_simulated(half_square, cfg, sc)
    assert max(e.staleness for e in log.entries) <= tau
    assert replay_check(log, sc).max_error <= 1e-12


def test_log_round_trip(ref, tmp_path):
    sc = DelayScenario(8, "uniform", mask_policy="random", p_keep=0.7, seed=1)
    _, _, log = run_simulated(ref, cfg_for(ref), sc)
    log.save(tmp_path)
    back = UpdateLog.load(tmp_path)
    assert len(back) == len(log)
    for a, b in zip(log.entries, back.entries):
        assert a.t == b.t and a.K == b.K
        assert a.delta.tobytes() == b.delta.tobytes() and a.x_read.tobytes() == b.x_read.tobytes()
        np.testing.assert_array_equal(a.mask, b.mask)
    assert replay_check(back, sc).max_error <= 1e-12


class TestSchedule:
    def test_drives_delays_and_masks(self, ref, tmp_path):
        path = tmp_path / "sched.txt"
        path.write_text("# t,delay,maskbits\n3,2,10100\n4,1,\n")
        sc = DelayScenario.from_file(path, tau=2, Y=5, delay_law="schedule", mask_policy="schedule")
        _, _, log = run_simulated(ref, cfg_for(ref), sc)
        assert log.entries[3].K == (1, 2)
        assert log.entries[4].K == (3,)
        assert log.entries[3].mask.tolist() == [1, 0, 1, 0, 0]
        assert log.entries[4].mask.tolist() == [1, 1, 1, 1, 1]
        assert all(not e.K for k, e in enumerate(log.entries) if k not in (3, 4))

    def test_delay_over_tau_rejected_with_line(self, tmp_path):
        path = tmp_path / "sched.txt"
        path.write_text("0,0,11\n1,7,11\n")
        with pytest.raises(ConfigurationError) as err:
            load_schedule(path, tau=3)
        assert err.value.line == 2

    def test_mask_length_checked(self, tmp_path):
        path = tmp_path / "sched.txt"
        path.write_text("0,0,111\n")
        with pytest.raises(ConfigurationError, match="bits"):
            load_schedule(path, tau=3, Y=2)

    def test_garbage_rejected(self, tmp_path):
        path = tmp_path / "sched.txt"
        path.write_text("zero,1,1\n")
        with pytest.raises(ConfigurationError):
            load_schedule(path, tau=3)

    def test_schedule_required(self):
        with pytest.raises(ConfigurationError, match="schedule"):
            DelayScenario(3, "schedule")


class TestScenarioValidation:
    def test_fixed_delay_over_tau(self):
        with pytest.raises(ConfigurationError):
            DelayScenario(2, "fixed", 3)

    def test_none_requires_all_ones(self):
        with pytest.raises(ConfigurationError):
            DelayScenario(0, "none", mask_policy="random", p_keep=0.5)

    def test_unknown_law(self):
        with pytest.raises(ConfigurationError):
            DelayScenario(1, "poisson")

    def test_p_keep_range(self):
        with pytest.raises(ConfigurationError):
            DelayScenario(1, "uniform", mask_policy="random", p_keep=1.5)
