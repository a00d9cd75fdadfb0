import math
import threading

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import tiny_dataset
from zovr.errors import ConfigurationError
from zovr.objectives import (
    CountingObjective,
    SyntheticDataset,
    make_blackbox,
    make_dataset,
    make_least_squares_svm,
    make_logistic,
    make_ridge,
)
from zovr.zo_estimator import SmoothingSchedule, dense_central_difference, full_smoothed_gradient

finite = st.floats(-3, 3, allow_nan=False)


def builtins(seed=0):
    lin = make_dataset(30, 6, seed, "gaussian-linear", 0.3)
    cls = make_dataset(30, 6, seed, "gaussian-logistic", 0.1)
    return [make_ridge(lin, 0.05), make_logistic(cls, 0.05), make_least_squares_svm(cls, 0.05)]


class TestRidge:
    def test_zero_residual_at_origin(self):
        obj = make_ridge(tiny_dataset([[1, 0]], [0]), 0.0)
        assert obj.eval_component(0, np.zeros(2)) == 0.0
        np.testing.assert_array_equal(obj.component_gradient(0, np.zeros(2)), [0, 0])

    def test_unit_residual(self):
        obj = make_ridge(tiny_dataset([[1, 0]], [1]), 0.0)
        assert obj.eval_component(0, np.zeros(2)) == 0.5
        np.testing.assert_array_equal(obj.component_gradient(0, np.zeros(2)), [-1, 0])

    def test_regularizer_only(self):
        obj = make_ridge(tiny_dataset([[0, 0]], [0]), 1.0)
        assert obj.eval_component(0, np.array([2.0, 0.0])) == 2.0
        np.testing.assert_array_equal(obj.component_gradient(0, np.array([2.0, 0.0])), [2, 0])

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigurationError):
            make_ridge(SyntheticDataset(np.zeros((3, 2)), np.zeros(4)), 0.0)

    def test_negative_lambda(self):
        with pytest.raises(ConfigurationError):
            make_ridge(tiny_dataset([[1.0]], [0.0]), -1.0)


class TestLogistic:
    def test_log2_at_origin(self):
        data = make_dataset(20, 3, 1, "gaussian-logistic")
        assert make_logistic(data, 0.0).value(np.zeros(3)) == pytest.approx(math.log(2), abs=1e-15)

    def test_hand_value(self):
        obj = make_logistic(tiny_dataset([[1.0]], [1.0]), 0.0)
        assert obj.eval_component(0, np.array([1.0])) == pytest.approx(math.log1p(math.exp(-1)), abs=1e-15)
        assert obj.eval_component(0, np.array([1.0])) == pytest.approx(0.31326, abs=1e-5)

    def test_classified_limit_is_stable(self):
        obj = make_logistic(tiny_dataset([[1.0]], [1.0]), 0.0)
        assert obj.eval_component(0, np.array([1e4])) == 0.0
        big = obj.eval_component(0, np.array([-1e4]))
        assert big == pytest.approx(1e4)
        assert np.all(np.isfinite(obj.component_gradient(0, np.array([-1e4]))))

    def test_rejects_nonbinary_labels(self):
        with pytest.raises(ConfigurationError, match="not in"):
            make_logistic(tiny_dataset([[1.0], [2.0]], [1.0, 0.5]), 0.0)


class TestLeastSquaresSVM:
    def test_zero_margin_residual(self):
        obj = make_least_squares_svm(tiny_dataset([[1.0], [-2.0]], [1.0, -0.5]), 0.0)
        assert obj.value(np.array([1.0])) == 0.0

    def test_unit_residual_at_origin(self):
        data = make_dataset(10, 4, 3, "gaussian-logistic")
        assert make_least_squares_svm(data, 0.0).value(np.zeros(4)) == 0.5

    def test_hand_value(self):
        obj = make_least_squares_svm(tiny_dataset([[2.0]], [1.0]), 0.0)
        assert obj.eval_component(0, np.array([1.0])) == 0.5


class TestBlackBox:
    def test_constant_gives_zero_estimates(self):
        obj = make_blackbox(3, 4, lambda i, x: 7.0)
        assert not obj.has_analytic_gradient
        g = full_smoothed_gradient(obj, np.array([1.0, -2.0, 0.5]), SmoothingSchedule.constant(0.3, 3))
        np.testing.assert_array_equal(g.g_mu, 0.0)

    def test_matches_ridge(self):
        ridge = builtins()[0]
        a, y, lam = ridge.features, ridge.labels, ridge.lam
        box = make_blackbox(6, 30, lambda i, x: 0.5 * (a[i] @ x - y[i]) ** 2 + 0.5 * lam * (x @ x))
        x = np.linspace(-1, 1, 6)
        mu = SmoothingSchedule.constant(0.01, 6)
        np.testing.assert_allclose(
            full_smoothed_gradient(box, x, mu).g_mu, full_smoothed_gradient(ridge, x, mu).g_mu, rtol=0, atol=1e-12
        )

    @pytest.mark.parametrize("mu", [1e-3, 0.1, 0.7, 1.0])
    def test_square_norm_exact(self, mu):
        box = make_blackbox(2, 1, lambda i, x: float(x @ x))
        g = full_smoothed_gradient(box, np.ones(2), SmoothingSchedule.constant(mu, 2)).g_mu
        np.testing.assert_allclose(g, [2.0, 2.0], atol=1e-12)

    def test_evaluator_errors_propagate(self):
        def bad(i, x):
            raise RuntimeError("evaluator down")

        with pytest.raises(RuntimeError, match="evaluator down"):
            make_blackbox(2, 1, bad).eval_component(0, np.zeros(2))


@pytest.mark.parametrize("k", range(3))
def test_central_differences_match_analytic(k):
    obj = builtins()[k]
    rng = np.random.default_rng(11)
    for _ in range(20):
        x = rng.standard_normal(obj.dim)
        zo = dense_central_difference(obj, x, 1e-5)
        exact = obj.gradient(x)
        assert np.linalg.norm(zo - exact) <= 1e-5 * np.linalg.norm(exact)


@pytest.mark.parametrize("k", range(3))
@given(x=arrays(np.float64, 6, elements=finite))
def test_full_gradient_is_mean_of_components(k, x):
    obj = builtins()[k]
    mean = np.mean([obj.component_gradient(i, x) for i in range(obj.n_components)], axis=0)
    g = obj.gradient(x)
    assert np.linalg.norm(g - mean) <= 1e-12 * max(1.0, np.linalg.norm(g))


@pytest.mark.parametrize("k", range(3))
@given(x=arrays(np.float64, 6, elements=finite))
def test_value_shortcut_matches_component_sum(k, x):
    obj = builtins()[k]
    total = sum(obj.eval_component(i, x) for i in range(obj.n_components)) / obj.n_components
    assert obj.value(x) == pytest.approx(total, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("k", [0, 2])
@given(x=arrays(np.float64, 6, elements=finite), mu=st.floats(1e-6, 1.0))
def test_quadratic_objectives_any_radius(k, x, mu):
    obj = builtins()[k]
    g = dense_central_difference(obj, x, mu)
    assert np.max(np.abs(g - obj.gradient(x))) <= 1e-8


def test_evaluation_is_pure():
    obj = builtins()[1]
    x = np.linspace(-1, 1, 6)
    before = x.copy()
    assert obj.eval_component(3, x) == obj.eval_component(3, x)
    np.testing.assert_array_equal(x, before)


def test_concurrent_evaluation_agrees():
    obj = builtins()[0]
    pts = np.random.default_rng(0).standard_normal((64, 6))
    idx = np.arange(64) % obj.n_components
    want = obj.eval_pairs(idx, pts)
    got = [None] * 4

    def worker(w):
        got[w] = np.concatenate([obj.eval_pairs(idx[k : k + 1], pts[k : k + 1]) for k in range(64)])

    threads = [threading.Thread(target=worker, args=(w,)) for w in range(4)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    for g in got:
        np.testing.assert_array_equal(g, want)


def test_arrays_are_read_only():
    obj = builtins()[0]
    with pytest.raises(ValueError):
        obj.features[0, 0] = 1.0


def test_counting_wrapper():
    obj = CountingObjective(builtins()[0])
    obj.eval_component(0, np.zeros(6))
    obj.eval_pairs(np.array([1, 2, 3]), np.zeros((3, 6)))
    assert obj.count == 4


class TestDataset:
    def test_regeneration_bit_identical(self):
        a = make_dataset(50, 5, 9, "gaussian-linear", 0.2)
        b = make_dataset(50, 5, 9, "gaussian-linear", 0.2)
        assert a.features.tobytes() == b.features.tobytes()
        assert a.labels.tobytes() == b.labels.tobytes()

    def test_seeds_differ(self):
        a = make_dataset(50, 5, 9)
        b = make_dataset(50, 5, 10)
        assert not np.array_equal(a.features, b.features)

    def test_logistic_labels_binary(self):
        d = make_dataset(200, 4, 0, "gaussian-logistic", 0.1)
        assert set(np.unique(d.labels)) <= {-1.0, 1.0}

    def test_csv_round_trip(self, tmp_path):
        d = make_dataset(25, 3, 4, "gaussian-linear", 0.7)
        path = tmp_path / "data.csv"
        d.to_csv(path)
        assert path.read_text().splitlines()[0] == "j0,j1,j2,label"
        back = SyntheticDataset.from_csv(path)
        assert back.features.tobytes() == d.features.tobytes()
        assert back.labels.tobytes() == d.labels.tobytes()

    def test_csv_bad_header(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("a,b,label\n1,2,3\n")
        with pytest.raises(ConfigurationError):
            SyntheticDataset.from_csv(path)

    def test_unknown_generator(self):
        with pytest.raises(ConfigurationError):
            make_dataset(5, 2, 0, "uniform")
