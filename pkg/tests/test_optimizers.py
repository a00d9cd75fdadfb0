import itertools
import math

import numpy as np
import pytest

from conftest import tiny_dataset
from zovr.errors import ConfigurationError, DivergenceError, StaleSnapshotError
from zovr.objectives import CountingObjective, make_blackbox, make_ridge
from zovr.optimizers import (
    TRACE_HEADER,
    RunConfig,
    Trace,
    TraceRecord,
    VREstimate,
    apply_update,
    record_points,
    run,
    run_asyszo_sequential,
    run_dszovr,
    vr_estimate,
)
from zovr.zo_estimator import SmoothingSchedule, batch_block_mean, full_smoothed_gradient, restrict_snapshot


def reference_config(ref, **kw):
    base = dict(gamma=0.9 * 4 / (ref.lipschitz * math.sqrt(500)), S=20, m=500, b=4, Y=5, mu=1e-4, seed=0)
    base.update(kw)
    return RunConfig(**base)


class TestVREstimate:
    def setup_method(self):
        rng = np.random.default_rng(3)
        self.obj = make_ridge(tiny_dataset(rng.standard_normal((5, 4)), rng.standard_normal(5)), 0.2)
        self.mu = SmoothingSchedule(np.array([0.1, 0.3, 0.05, 0.2]))
        self.x_tilde = np.array([0.5, -0.2, 1.0, 0.3])
        self.snap = full_smoothed_gradient(self.obj, self.x_tilde, self.mu, epoch=2)

    def test_at_snapshot_equals_restriction(self):
        for B in itertools.combinations(range(5), 2):
            v = vr_estimate(self.obj, self.x_tilde.copy(), self.snap, B, [1, 3], self.mu, epoch=2)
            assert v.values.tobytes() == restrict_snapshot(self.snap, [1, 3]).values.tobytes()

    def test_full_batch_is_full_block_gradient(self):
        x_hat = np.array([1.0, 2.0, -1.0, 0.0])
        v = vr_estimate(self.obj, x_hat, self.snap, range(5), [0, 2], self.mu)
        want = batch_block_mean(self.obj, np.arange(5), x_hat, np.array([0, 2]), self.mu.mu)
        np.testing.assert_allclose(v.values, want, rtol=0, atol=1e-12)

    def test_batch_mean_is_block_gradient_of_f(self):
        x_hat = np.array([-0.4, 0.9, 0.1, 1.7])
        J = np.array([0, 3])
        batches = list(itertools.combinations(range(5), 2))
        mean = sum(vr_estimate(self.obj, x_hat, self.snap, B, J, self.mu).values for B in batches) / len(batches)
        want = batch_block_mean(self.obj, np.arange(5), x_hat, J, self.mu.mu)
        np.testing.assert_allclose(mean, want, rtol=0, atol=1e-12)

    def test_evaluation_count(self):
        obj = CountingObjective(self.obj)
        vr_estimate(obj, np.ones(4), self.snap, [0, 2, 4], [1, 2], self.mu)
        assert obj.count == 4 * 3 * 2

    def test_stale_snapshot(self):
        with pytest.raises(StaleSnapshotError):
            vr_estimate(self.obj, self.x_tilde, self.snap, [0], [0], self.mu, epoch=3)

    def test_variance_positive_off_snapshot(self):
        x_hat = self.x_tilde + np.array([0.3, -0.1, 0.2, 0.4])
        vals = [vr_estimate(self.obj, x_hat, self.snap, B, [0, 1], self.mu).values for B in itertools.combinations(range(5), 2)]
        assert np.var(vals, axis=0).max() > 0


class TestApplyUpdate:
    def test_zero_step(self):
        x = np.array([1.0, 2.0])
        v = VREstimate(np.array([0]), np.array([5.0]), np.array([0]), 0)
        np.testing.assert_array_equal(apply_update(x, v, 0.0), x)

    def test_hand_update(self):
        v = VREstimate(np.array([0]), np.array([2.0]), np.array([0]), 0)
        np.testing.assert_array_equal(apply_update(np.array([1.0, 1.0]), v, 0.5), [0.0, 1.0])

    def test_input_untouched(self):
        x = np.array([1.0, 1.0])
        apply_update(x, VREstimate(np.array([1]), np.array([1.0]), np.array([0]), 0), 1.0)
        np.testing.assert_array_equal(x, [1.0, 1.0])

    def test_disjoint_updates_commute(self):
        x = np.array([0.1, 0.2, 0.3, 0.4])
        u = VREstimate(np.array([0, 2]), np.array([1.5, -0.7]), np.array([0]), 0)
        w = VREstimate(np.array([1, 3]), np.array([0.3, 2.2]), np.array([0]), 0)
        a = apply_update(apply_update(x, u, 0.3), w, 0.3)
        b = apply_update(apply_update(x, w, 0.3), u, 0.3)
        assert a.tobytes() == b.tobytes()


class TestRunConfig:
    @pytest.mark.parametrize("kw,key", [({"gamma": 0.0}, "gamma"), ({"S": 0}, "S"), ({"b": 0}, "b"), ({"m": -1}, "m")])
    def test_invalid(self, kw, key):
        args = dict(gamma=0.1, S=1, m=1)
        args.update(kw)
        with pytest.raises(ConfigurationError) as err:
            RunConfig(**args)
        assert err.value.key == key

    def test_unknown_algorithm(self):
        with pytest.raises(ConfigurationError):
            RunConfig(gamma=0.1, S=1, m=1, algorithm="sgd")

    def test_batch_larger_than_l(self, half_square):
        with pytest.raises(ConfigurationError, match="b=2"):
            run_dszovr(half_square, RunConfig(gamma=0.1, S=1, m=1, b=2))


class TestDSZOVR:
    def test_one_step_by_hand(self, half_square):
        cfg = RunConfig(gamma=0.5, S=1, m=1, b=1, Y=1, mu=0.1, x0=np.array([1.0]))
        x, _ = run_dszovr(half_square, cfg)
        assert x[0] == pytest.approx(0.5, abs=1e-15)

    def test_zero_inner_iterations(self, half_square):
        x, tr = run_dszovr(half_square, RunConfig(gamma=0.5, S=5, m=0, x0=np.array([1.0])))
        assert x[0] == 1.0 and len(tr) == 1

    def test_regression_reference(self, ref):
        x, tr = run_dszovr(ref, reference_config(ref))
        assert tr[-1].grad_norm_sq <= 1e-6
        assert tr[-1].global_iter == 20 * 500

    def test_evaluation_accounting(self, ref):
        cfg = reference_config(ref, S=2, m=10)
        counted = CountingObjective(ref)
        _, tr = run_dszovr(counted, cfg)
        want = 2 * (2 * 20 * 500 + 10 * 4 * 4 * 5)
        assert tr[-1].evals == want
        # Telemetry calls value() which goes through eval_pairs; subtract it out.
        telemetry = len(tr) * ref.n_components
        assert counted.count - telemetry == want

    def test_epochwise_descent(self, ref):
        _, tr = run_dszovr(ref, reference_config(ref, S=8))
        ends = [r.f for r in tr if r.iter == 500]
        assert all(b <= a for a, b in zip([tr[0].f] + ends, ends))

    def test_deterministic_csv(self, ref, tmp_path):
        cfg = reference_config(ref, S=2, m=100, trace_every=10)
        for k in range(2):
            run_dszovr(ref, cfg)[1].to_csv(tmp_path / f"t{k}.csv", wall_clock=False)
        assert (tmp_path / "t0.csv").read_bytes() == (tmp_path / "t1.csv").read_bytes()

    def test_trace_invariants(self, ref):
        _, tr = run_dszovr(ref, reference_config(ref, S=3, m=50, trace_every=7))
        g = tr.column("global_iter")
        e = tr.column("evals")
        assert np.all(np.diff(g) > 0) and np.all(np.diff(e) >= 0)

    def test_divergence_guard(self, ref):
        with pytest.raises(DivergenceError) as err:
            run_dszovr(ref, reference_config(ref, gamma=5.0, S=5, m=200))
        assert err.value.trace is not None and len(err.value.trace) >= 1

    def test_wrong_algorithm(self, ref):
        with pytest.raises(ConfigurationError):
            run_dszovr(ref, reference_config(ref, algorithm="asyszo"))


class TestAsySZO:
    def test_constant_objective_never_moves(self):
        obj = make_blackbox(3, 4, lambda i, x: 1.0)
        x0 = np.array([0.5, -1.0, 2.0])
        x, _ = run_asyszo_sequential(obj, RunConfig(gamma=1.0, S=2, m=20, Y=2, algorithm="asyszo", x0=x0))
        np.testing.assert_array_equal(x, x0)

    def test_two_steps_by_hand(self, half_square):
        cfg = RunConfig(gamma=0.5, gamma0=0.5, S=1, m=1, Y=1, mu=0.1, algorithm="asyszo", x0=np.array([1.0]))
        assert run_asyszo_sequential(half_square, cfg)[0][0] == pytest.approx(0.5, abs=1e-15)
        x, _ = run_asyszo_sequential(half_square, cfg.with_(m=2))
        assert x[0] == pytest.approx(0.5 - 0.5 / math.sqrt(2) * 0.5, abs=1e-15)
        assert x[0] == pytest.approx(0.32322, abs=1e-5)

    def test_evaluation_accounting(self, ref):
        cfg = reference_config(ref, S=1, m=30, algorithm="asyszo", gamma0=0.1)
        _, tr = run_asyszo_sequential(ref, cfg)
        assert tr[-1].evals == 30 * 2 * 5

    def test_dispatch(self, ref):
        cfg = reference_config(ref, S=1, m=30, algorithm="asyszo", gamma0=0.1)
        assert run(ref, cfg)[0].tobytes() == run_asyszo_sequential(ref, cfg)[0].tobytes()


class TestTrace:
    def test_rejects_nonincreasing_iter(self):
        tr = Trace([TraceRecord(0, 0, 5, 1.0, 1.0, 0, 0.0)])
        with pytest.raises(ValueError):
            tr.append(TraceRecord(0, 0, 5, 1.0, 1.0, 1, 0.0))

    def test_rejects_decreasing_evals(self):
        tr = Trace([TraceRecord(0, 0, 5, 1.0, 1.0, 10, 0.0)])
        with pytest.raises(ValueError):
            tr.append(TraceRecord(0, 0, 6, 1.0, 1.0, 9, 0.0))

    def test_csv_round_trip(self, ref, tmp_path):
        _, tr = run_dszovr(ref, reference_config(ref, S=1, m=40, trace_every=5))
        tr.to_csv(tmp_path / "t.csv")
        assert (tmp_path / "t.csv").read_text().splitlines()[0] == ",".join(TRACE_HEADER)
        back = Trace.from_csv(tmp_path / "t.csv")
        assert back.records == tr.records

    def test_log_cadence(self):
        due = record_points(RunConfig(gamma=1, S=1, m=1000, trace_per_decade=2), 1000)
        marks = [g for g in range(1, 1001) if due(g)]
        assert marks == [1, 4, 10, 32, 100, 317, 1000]
