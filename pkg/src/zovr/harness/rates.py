"""Log-log rate fits on trace metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..errors import FitError
from ..optimizers import Trace

MIN_POINTS = 10
BURN_IN = 0.1
METRICS = ("grad_norm_sq", "min_grad_norm_sq", "avg_grad_norm_sq", "f")
AXES = ("global_iter", "evals")


@dataclass(frozen=True)
class RateFit:
    slope: float
    ci_low: float
    ci_high: float
    stderr: float
    intercept: float
    points: int

    def __str__(self) -> str:
        half = (self.ci_high - self.ci_low) / 2
        return f"{self.slope:.4f} +/- {half:.4f} (n={self.points})"


def running_min(y: np.ndarray) -> np.ndarray:
    return np.minimum.accumulate(np.asarray(y, dtype=np.float64))


def running_mean(y: np.ndarray, x: np.ndarray | None = None) -> np.ndarray:
    """Running average of ``y``.

    With ``x`` (record positions) each value is held until the next record, so
    the average is over iterations rather than over records.
    """
    y = np.asarray(y, dtype=np.float64)
    if x is None:
        return np.cumsum(y) / np.arange(1, y.size + 1)
    x = np.asarray(x, dtype=np.float64)
    out = y.copy()
    span = x[1:] - x[:-1]
    area = np.cumsum(y[:-1] * span)
    width = x[1:] - x[0]
    out[1:] = np.where(width > 0, area / np.where(width > 0, width, 1.0), y[1:])
    return out


def metric_series(trace: Trace, metric: str) -> np.ndarray:
    if metric not in METRICS:
        raise FitError(f"unknown metric {metric!r}; choose from {', '.join(METRICS)}")
    if metric == "f":
        return trace.column("f")
    g = trace.column("grad_norm_sq")
    if metric == "min_grad_norm_sq":
        return running_min(g)
    if metric == "avg_grad_norm_sq":
        return running_mean(g, trace.column("global_iter"))
    return g


def fit_series(x, y, burn_in: float = BURN_IN, confidence: float = 0.95) -> RateFit:
    """Least-squares slope of ``log y`` against ``log x``.

    Points with ``x <= 0`` or ``x < burn_in * max(x)`` are dropped first.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise FitError("x and y must have the same length")
    if x.size == 0:
        raise FitError("empty series")
    keep = (x > 0) & (x >= burn_in * np.max(x))
    x, y = x[keep], y[keep]
    if x.size < MIN_POINTS:
        raise FitError(f"fit window has {x.size} points, need at least {MIN_POINTS}")
    if not np.all(np.isfinite(y)) or np.any(y <= 0):
        raise FitError("metric must be finite and positive throughout the fit window")
    lx, ly = np.log(x), np.log(y)
    if np.ptp(ly) == 0:
        return RateFit(0.0, 0.0, 0.0, 0.0, float(ly[0]), x.size)
    res = stats.linregress(lx, ly)
    half = stats.t.ppf(0.5 + confidence / 2, x.size - 2) * res.stderr
    return RateFit(float(res.slope), float(res.slope - half), float(res.slope + half), float(res.stderr), float(res.intercept), x.size)


def fit_rate(trace: Trace, metric: str = "min_grad_norm_sq", axis: str = "global_iter", burn_in: float = BURN_IN) -> RateFit:
    """Fit ``metric ~ axis^slope`` over the trace after the burn-in window."""
    if axis not in AXES:
        raise FitError(f"unknown axis {axis!r}; choose from {', '.join(AXES)}")
    return fit_series(trace.column(axis), metric_series(trace, metric), burn_in)


def mean_trace(traces: list[Trace], label: str = "") -> Trace:
    """Record-wise mean of ``f`` and ``grad_norm_sq`` over runs with identical cadence."""
    if not traces:
        raise FitError("no traces to average")
    first = traces[0]
    for tr in traces[1:]:
        if len(tr) != len(first) or not np.array_equal(tr.column("global_iter"), first.column("global_iter")):
            raise FitError("traces to average must share their record iterations")
    f = np.mean([tr.column("f") for tr in traces], axis=0)
    g = np.mean([tr.column("grad_norm_sq") for tr in traces], axis=0)
    out = Trace(label=label or first.label)
    for k, r in enumerate(first):
        out.append(r._replace(f=float(f[k]), grad_norm_sq=float(g[k]), wall_ms=0.0))
    return out


@dataclass(frozen=True)
class AlgorithmRates:
    label: str
    fits: dict[tuple[str, str], RateFit | str]
    final_f: float
    final_grad_norm_sq: float


def rate_report(trace: Trace, label: str | None = None) -> AlgorithmRates:
    fits: dict[tuple[str, str], RateFit | str] = {}
    for metric in ("min_grad_norm_sq", "avg_grad_norm_sq"):
        for axis in AXES:
            try:
                fits[(metric, axis)] = fit_rate(trace, metric, axis)
            except FitError as exc:
                fits[(metric, axis)] = f"unavailable ({exc})"
    last = trace[-1]
    return AlgorithmRates(label or trace.label, fits, last.f, last.grad_norm_sq)


def format_report(rates: list[AlgorithmRates]) -> str:
    out = []
    for r in rates:
        out.append(f"{r.label}.final_f = {r.final_f!r}\n")
        out.append(f"{r.label}.final_grad_norm_sq = {r.final_grad_norm_sq!r}\n")
        for (metric, axis), fit in r.fits.items():
            key = f"{r.label}.{metric}.vs_{axis}"
            if isinstance(fit, RateFit):
                out.append(f"{key}.slope = {fit.slope!r}\n")
                out.append(f"{key}.ci = {fit.ci_low!r} {fit.ci_high!r}\n")
                out.append(f"{key}.points = {fit.points}\n")
            else:
                out.append(f"{key}.slope = {fit}\n")
    return "".join(out)
