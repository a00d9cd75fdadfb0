"""Evaluation-only finite-sum objectives ``f(x) = (1/l) sum_i f_i(x)``.

The optimizers only ever call :meth:`FiniteSumObjective.eval_pairs` (or its
scalar wrapper :meth:`FiniteSumObjective.eval_component`). Analytic gradients
exist purely for telemetry and test oracles.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Literal

import numpy as np

from .errors import ConfigurationError

GeneratorKind = Literal["gaussian-linear", "gaussian-logistic"]


class FiniteSumObjective:
    """Base class: ``l`` components over ``R^N``.

    Subclasses override :meth:`eval_pairs`. Instances are treated as immutable
    so that concurrent workers can evaluate them without coordination.
    """

    has_analytic_gradient: bool = False
    #: Upper bound on the Lipschitz constant of every component gradient, if known.
    lipschitz: float | None = None

    def __init__(self, n_components: int, dim: int):
        if n_components < 1 or dim < 1:
            raise ConfigurationError(f"need l >= 1 and N >= 1, got l={n_components}, N={dim}")
        self.n_components = int(n_components)
        self.dim = int(dim)

    # -- evaluation ---------------------------------------------------------
    def eval_pairs(self, idx: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Evaluate ``f_{idx[k]}(points[k])`` for every row ``k``."""
        raise NotImplementedError

    def eval_component(self, i: int, x: np.ndarray) -> float:
        x = self._check_point(x)
        self._check_index(i)
        return float(self.eval_pairs(np.array([i], dtype=np.int64), x[None, :])[0])

    def value(self, x: np.ndarray) -> float:
        """Full objective, summed over components in index order."""
        x = self._check_point(x)
        idx = np.arange(self.n_components, dtype=np.int64)
        vals = self.eval_pairs(idx, np.broadcast_to(x, (self.n_components, self.dim)))
        total = 0.0
        for v in vals:
            total += float(v)
        return total / self.n_components

    # -- telemetry ----------------------------------------------------------
    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no analytic gradient")

    def component_gradient(self, i: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no analytic gradient")

    # -- helpers ------------------------------------------------------------
    def _check_point(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise ConfigurationError(f"point has shape {x.shape}, expected ({self.dim},)")
        return x

    def _check_index(self, i: int) -> None:
        if not 0 <= i < self.n_components:
            raise ConfigurationError(f"component index {i} outside [0, {self.n_components})")


# Margin losses phi(s, y) and their derivative in s, where s = a.x is the score.
def _squared_residual(s: np.ndarray, y: np.ndarray) -> np.ndarray:
    r = s - y
    return 0.5 * r * r


def _squared_residual_grad(s: np.ndarray, y: np.ndarray) -> np.ndarray:
    return s - y


def _logistic(s: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, -y * s)


def _logistic_grad(s: np.ndarray, y: np.ndarray) -> np.ndarray:
    # -y * sigmoid(-y s), evaluated without overflow
    return -y * np.exp(-np.logaddexp(0.0, y * s))


def _squared_margin(s: np.ndarray, y: np.ndarray) -> np.ndarray:
    r = 1.0 - y * s
    return 0.5 * r * r


def _squared_margin_grad(s: np.ndarray, y: np.ndarray) -> np.ndarray:
    return -y * (1.0 - y * s)


_LOSSES = {
    "ridge": (_squared_residual, _squared_residual_grad, 1.0),
    "logistic": (_logistic, _logistic_grad, 0.25),
    "lssvm": (_squared_margin, _squared_margin_grad, 1.0),
}


class LinearModelObjective(FiniteSumObjective):
    """``f_i(x) = phi(a_i . x, b_i) + (lam/2) ||x||^2`` for a smooth margin loss."""

    has_analytic_gradient = True

    def __init__(self, features: np.ndarray, labels: np.ndarray, lam: float, kind: str):
        features = np.ascontiguousarray(features, dtype=np.float64)
        labels = np.ascontiguousarray(labels, dtype=np.float64)
        if features.ndim != 2:
            raise ConfigurationError("features must be a 2-D array")
        if labels.shape != (features.shape[0],):
            raise ConfigurationError(
                f"labels have shape {labels.shape}, expected ({features.shape[0]},)"
            )
        if not lam >= 0:
            raise ConfigurationError(f"lambda must be nonnegative, got {lam}", key="lambda")
        if kind not in _LOSSES:
            raise ConfigurationError(f"unknown objective kind {kind!r}", key="objective")
        super().__init__(*features.shape)
        self.features = features
        self.labels = labels
        self.lam = float(lam)
        self.kind = kind
        self._loss, self._dloss, curvature = _LOSSES[kind]
        self.lipschitz = curvature * float(np.max(np.sum(features**2, axis=1))) + self.lam
        features.setflags(write=False)
        labels.setflags(write=False)

    def eval_pairs(self, idx: np.ndarray, points: np.ndarray) -> np.ndarray:
        a = self.features.take(idx, axis=0)
        scores = np.einsum("ij,ij->i", a, points)
        out = self._loss(scores, self.labels.take(idx))
        if self.lam:
            out += 0.5 * self.lam * np.einsum("ij,ij->i", points, points)
        return out

    def value(self, x: np.ndarray) -> float:
        x = self._check_point(x)
        losses = self._loss(self.features @ x, self.labels)
        return float(np.mean(losses)) + 0.5 * self.lam * float(x @ x)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = self._check_point(x)
        w = self._dloss(self.features @ x, self.labels)
        return self.features.T @ w / self.n_components + self.lam * x

    def component_gradient(self, i: int, x: np.ndarray) -> np.ndarray:
        x = self._check_point(x)
        self._check_index(i)
        a = self.features[i]
        return float(self._dloss(np.array([a @ x]), self.labels[i : i + 1])[0]) * a + self.lam * x


class BlackBoxObjective(FiniteSumObjective):
    """Wraps an opaque ``eval_fn(i, x) -> float``; no gradients."""

    def __init__(self, dim: int, n_components: int, eval_fn: Callable[[int, np.ndarray], float]):
        super().__init__(n_components, dim)
        self._fn = eval_fn

    def eval_pairs(self, idx: np.ndarray, points: np.ndarray) -> np.ndarray:
        out = np.empty(len(idx))
        for k, (i, p) in enumerate(zip(idx, points)):
            out[k] = self._fn(int(i), p)
        return out


class CountingObjective(FiniteSumObjective):
    """Delegating wrapper that counts component evaluations (test instrumentation)."""

    def __init__(self, inner: FiniteSumObjective):
        super().__init__(inner.n_components, inner.dim)
        self.inner = inner
        self.count = 0
        self.has_analytic_gradient = inner.has_analytic_gradient
        self.lipschitz = inner.lipschitz

    def eval_pairs(self, idx: np.ndarray, points: np.ndarray) -> np.ndarray:
        self.count += len(idx)
        return self.inner.eval_pairs(idx, points)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.inner.gradient(x)

    def component_gradient(self, i: int, x: np.ndarray) -> np.ndarray:
        return self.inner.component_gradient(i, x)


@dataclass(frozen=True)
class SyntheticDataset:
    features: np.ndarray
    labels: np.ndarray
    seed: int | None = None
    generator_kind: str = "gaussian-linear"
    planted: np.ndarray | None = field(default=None, compare=False, repr=False)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def to_csv(self, path: str | Path) -> None:
        """Write ``j0,...,j{N-1},label`` rows; ``repr`` keeps floats round-trip exact."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([f"j{j}" for j in range(self.dim)] + ["label"])
            for row, y in zip(self.features, self.labels):
                writer.writerow([repr(float(v)) for v in row] + [repr(float(y))])

    @classmethod
    def from_csv(cls, path: str | Path) -> "SyntheticDataset":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ConfigurationError(f"{path}: empty dataset file")
        header = rows[0]
        n = len(header) - 1
        if n < 1 or header != [f"j{j}" for j in range(n)] + ["label"]:
            raise ConfigurationError(f"{path}: header must be j0,...,j{{N-1}},label", line=1)
        data = np.empty((len(rows) - 1, n + 1))
        for k, row in enumerate(rows[1:]):
            if len(row) != n + 1:
                raise ConfigurationError(f"{path}: expected {n + 1} fields", line=k + 2)
            try:
                data[k] = [float(v) for v in row]
            except ValueError as exc:
                raise ConfigurationError(f"{path}: {exc}", line=k + 2) from None
        return cls(features=data[:, :n].copy(), labels=data[:, n].copy())


def make_dataset(
    l: int,
    N: int,
    seed: int,
    kind: GeneratorKind = "gaussian-linear",
    noise: float = 0.0,
) -> SyntheticDataset:
    """i.i.d. standard normal features with labels from a planted vector.

    ``gaussian-linear`` gives ``b = A w + noise * eps``. ``gaussian-logistic``
    draws ``b in {-1, +1}`` with ``P(b = +1) = sigmoid(a . w)``; ``noise``
    additionally flips each label with that probability.
    """
    if l < 1 or N < 1:
        raise ConfigurationError(f"need l >= 1 and N >= 1, got l={l}, N={N}")
    rng = np.random.default_rng(seed)
    features = rng.standard_normal((l, N))
    planted = rng.standard_normal(N)
    scores = features @ planted
    if kind == "gaussian-linear":
        labels = scores + noise * rng.standard_normal(l)
    elif kind == "gaussian-logistic":
        prob = np.exp(-np.logaddexp(0.0, -scores))
        labels = np.where(rng.random(l) < prob, 1.0, -1.0)
        if noise:
            labels = np.where(rng.random(l) < noise, -labels, labels)
    else:
        raise ConfigurationError(f"unknown generator kind {kind!r}")
    return SyntheticDataset(features, labels, seed=seed, generator_kind=kind, planted=planted)


def _check_binary(labels: np.ndarray) -> None:
    bad = ~np.isin(labels, (-1.0, 1.0))
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise ConfigurationError(f"label {labels[k]!r} at sample {k} is not in {{-1, +1}}")


def make_ridge(dataset: SyntheticDataset, lam: float) -> LinearModelObjective:
    """``f_i(x) = 1/2 (a_i.x - b_i)^2 + (lam/2)||x||^2``."""
    return LinearModelObjective(dataset.features, dataset.labels, lam, "ridge")


def make_logistic(dataset: SyntheticDataset, lam: float) -> LinearModelObjective:
    """``f_i(x) = log(1 + exp(-b_i a_i.x)) + (lam/2)||x||^2`` with ``b_i = +-1``."""
    _check_binary(np.asarray(dataset.labels))
    return LinearModelObjective(dataset.features, dataset.labels, lam, "logistic")


def make_least_squares_svm(dataset: SyntheticDataset, lam: float) -> LinearModelObjective:
    """``f_i(x) = 1/2 (1 - b_i a_i.x)^2 + (lam/2)||x||^2``."""
    return LinearModelObjective(dataset.features, dataset.labels, lam, "lssvm")


def make_blackbox(N: int, l: int, eval_fn: Callable[[int, np.ndarray], float]) -> BlackBoxObjective:
    return BlackBoxObjective(N, l, eval_fn)


def reference_instance(label_noise: float = 0.5) -> LinearModelObjective:
    """The pinned benchmark problem: ridge, l=500, N=20, lambda=0.01, seed 42."""
    return make_ridge(make_dataset(500, 20, 42, "gaussian-linear", label_noise), 0.01)
