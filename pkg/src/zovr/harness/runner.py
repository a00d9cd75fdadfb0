"""Experiment orchestration: build the problem, run, write the run directory.

Exit statuses: 0 completed (and met ``grad_tol`` when set), 1 completed but
missed ``grad_tol`` or failed verification, 2 diverged, 3 infeasible settings
under ``theory = true``, 4 configuration error.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from ..async_engine.runtime import run_async
from ..async_engine.simulator import DelayScenario, load_schedule, run_simulated
from ..errors import ConfigurationError, DivergenceError, InfeasibleSettingsError, WorkerError
from ..objectives import (
    LinearModelObjective,
    SyntheticDataset,
    make_dataset,
    make_least_squares_svm,
    make_logistic,
    make_ridge,
)
from ..optimizers import RunConfig, Trace, run
from ..theory import (
    AnalysisSettings,
    SmoothnessConstants,
    analytic_constants,
    check_feasible,
    estimate_constants,
    theorem2_certificate,
)
from .config import dump_config
from .rates import AXES, AlgorithmRates, format_report, mean_trace, metric_series, rate_report

EXIT_OK, EXIT_FAILED, EXIT_DIVERGED, EXIT_INFEASIBLE, EXIT_CONFIG = 0, 1, 2, 3, 4
PLOT_METRICS = ("grad_norm_sq", "min_grad_norm_sq", "avg_grad_norm_sq", "f")


@dataclass
class ExperimentResult:
    status: int
    run_dir: Path | None
    message: str = ""
    rates: list[AlgorithmRates] = field(default_factory=list)
    traces: dict[str, Trace] = field(default_factory=dict)
    x: np.ndarray | None = None


def build_objective(cfg: dict[str, Any]) -> LinearModelObjective:
    classify = cfg["objective"] in ("logistic", "lssvm")
    if cfg["data_csv"]:
        data = SyntheticDataset.from_csv(cfg["data_csv"])
    else:
        kind = "gaussian-logistic" if classify else "gaussian-linear"
        if classify and not 0 <= cfg["label_noise"] <= 1:
            raise ConfigurationError("label_noise is a flip probability here and must lie in [0, 1]", key="label_noise")
        data = make_dataset(cfg["l"], cfg["N"], cfg["data_seed"], kind, cfg["label_noise"])
    maker = {"ridge": make_ridge, "logistic": make_logistic, "lssvm": make_least_squares_svm}[cfg["objective"]]
    obj = maker(data, cfg["lambda"])
    if cfg["b"] > obj.n_components:
        raise ConfigurationError(f"b={cfg['b']} exceeds l={obj.n_components}", key="b")
    if cfg["Y"] > obj.dim:
        raise ConfigurationError(f"Y={cfg['Y']} exceeds N={obj.dim}", key="Y")
    return obj


def smoothness(obj: LinearModelObjective, cfg: dict[str, Any]) -> SmoothnessConstants:
    if cfg["constants"] == "analytic":
        return analytic_constants(obj)
    return estimate_constants(obj, cfg["mu"], cfg["constants_trials"], seed=cfg["seed"])


def effective_gamma(cfg: dict[str, Any], consts: SmoothnessConstants, l: int) -> float:
    if cfg["gamma"] != "auto":
        return float(cfg["gamma"])
    return cfg["u0"] * cfg["b"] / (consts.L_tilde * l ** cfg["alpha"])


def analysis_settings(cfg: dict[str, Any], obj: LinearModelObjective, consts: SmoothnessConstants) -> AnalysisSettings:
    return AnalysisSettings(
        N=obj.dim,
        l=obj.n_components,
        Y=cfg["Y"],
        b=cfg["b"],
        constants=consts,
        tau=cfg["tau"],
        S=cfg["S"],
        alpha=cfg["alpha"],
        u0=cfg["u0"],
        mu=cfg["mu"],
    )


def scenario_from(cfg: dict[str, Any]) -> DelayScenario:
    schedule = load_schedule(cfg["schedule"], cfg["tau"], cfg["Y"]) if cfg["schedule"] else None
    return DelayScenario(
        tau=cfg["tau"],
        delay_law=cfg["delay_law"],
        delay=cfg["delay"],
        mask_policy=cfg["mask_policy"],
        p_keep=cfg["p_keep"],
        seed=cfg["scenario_seed"],
        schedule=schedule,
    )


def run_config(cfg: dict[str, Any], gamma: float, seed: int) -> RunConfig:
    return RunConfig(
        gamma=gamma,
        S=cfg["S"],
        m=cfg["m"],
        b=cfg["b"],
        Y=cfg["Y"],
        mu=cfg["mu"],
        seed=seed,
        algorithm=cfg["algorithm"],
        gamma0=cfg["gamma0"],
        trace_every=cfg["trace_every"] or None,
        trace_per_decade=cfg["trace_per_decade"] or None,
    )


def resolve_out_root(cfg: dict[str, Any], out_root: str | Path | None) -> Path:
    if out_root is not None:
        return Path(out_root)
    env = os.environ.get("ZOVR_OUT")
    if env:
        return Path(env)
    return Path(cfg["out"])


def run_name(cfg: dict[str, Any]) -> str:
    return cfg["name"] or f"{cfg['objective']}-{cfg['algorithm']}-{cfg['backend']}-seed{cfg['seed']}"


def write_plots(plot_dir: Path, label: str, trace: Trace) -> None:
    plot_dir.mkdir(parents=True, exist_ok=True)
    for metric in PLOT_METRICS:
        y = metric_series(trace, metric)
        for axis in AXES:
            x = trace.column(axis)
            ok = np.isfinite(x) & np.isfinite(y)
            lines = "".join(f"{xv!r} {yv!r}\n" for xv, yv in zip(x[ok].tolist(), y[ok].tolist()))
            (plot_dir / f"{label}_{metric}_vs_{axis}.dat").write_text(lines)


def _replicates(cfg, obj, rcfg, scenario, run_dir, label, p):
    """Run every replicate; return (per-replicate traces, final iterate of the first)."""
    traces, first_x = [], None
    for r in range(cfg["replicates"]):
        rc = rcfg.with_(seed=rcfg.seed + r)
        if cfg["backend"] == "async":
            x, tr = run_async(obj, rc, p)
        elif cfg["backend"] == "simulated" and rc.algorithm == "dszovr":
            x, tr, log = run_simulated(obj, rc, scenario)
            if r == 0:
                log.save(run_dir / "update_log")
        else:
            x, tr = run(obj, rc)
        tr.label = label
        traces.append(tr)
        if r == 0:
            first_x = x
    return traces, first_x


def _write_traces(run_dir: Path, prefix: str, traces: list[Trace], wall: bool) -> Trace:
    traces[0].to_csv(run_dir / f"{prefix}.csv", wall_clock=wall)
    if len(traces) == 1:
        return traces[0]
    for r, tr in enumerate(traces[1:], start=1):
        tr.to_csv(run_dir / f"{prefix}_r{r}.csv", wall_clock=wall)
    avg = mean_trace(traces, traces[0].label)
    avg.to_csv(run_dir / f"{prefix}_mean.csv", wall_clock=False)
    return avg


def run_experiment(
    cfg: dict[str, Any],
    out_root: str | Path | None = None,
    threads: int | None = None,
) -> ExperimentResult:
    """Execute a validated config and write its self-describing run directory."""
    if threads is not None:
        cfg = {**cfg, "threads": threads}
    run_dir = resolve_out_root(cfg, out_root) / run_name(cfg)
    try:
        obj = build_objective(cfg)
        consts = smoothness(obj, cfg)
        gamma = effective_gamma(cfg, consts, obj.n_components)
        scenario = scenario_from(cfg) if cfg["backend"] == "simulated" else None
        rcfg = run_config(cfg, gamma, cfg["seed"])
        rcfg.validate_for(obj)
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "config.resolved").write_text(dump_config(cfg))
    except ConfigurationError as exc:
        return ExperimentResult(EXIT_CONFIG, None, f"configuration error: {exc}")
    except OSError as exc:
        return ExperimentResult(EXIT_CONFIG, None, f"cannot write output directory {run_dir}: {exc.strerror}")

    summary = [f"effective_gamma = {gamma!r}", f"L_tilde = {consts.L_tilde!r}", f"constants_source = {consts.source}"]
    if cfg["theory"]:
        try:
            settings = analysis_settings(cfg, obj, consts)
            margin = check_feasible(obj.dim, cfg["Y"], consts.L_tilde, gamma, cfg["tau"])
            summary.append(f"feasibility_margin = {margin!r}")
            cert = theorem2_certificate(settings)
            (run_dir / "certificate.txt").write_text(cert.report())
        except InfeasibleSettingsError as exc:
            _write_summary(run_dir, summary + [f"status = {EXIT_INFEASIBLE}", f"reason = {exc}"])
            return ExperimentResult(EXIT_INFEASIBLE, run_dir, f"infeasible settings: {exc}")
        except ConfigurationError as exc:
            return ExperimentResult(EXIT_CONFIG, run_dir, f"configuration error: {exc}")

    wall = cfg["wall_clock"]
    label = cfg["algorithm"]
    result = ExperimentResult(EXIT_OK, run_dir)
    try:
        traces, x = _replicates(cfg, obj, rcfg, scenario, run_dir, label, cfg["threads"])
        main = _write_traces(run_dir, "trace", traces, wall)
        result.traces[label] = main
        result.x = x
        write_plots(run_dir / "plots", label, main)
        result.rates.append(rate_report(main, label))
        if cfg["compare_baseline"] and cfg["algorithm"] == "dszovr":
            budget = traces[0][-1].evals
            T = max(budget // (2 * cfg["Y"]), 1)
            bcfg = rcfg.with_(algorithm="asyszo", S=1, m=T)
            base_traces, _ = _replicates({**cfg, "backend": "sequential"}, obj, bcfg, None, run_dir, "asyszo", 1)
            base = _write_traces(run_dir, "baseline_trace", base_traces, wall)
            result.traces["asyszo"] = base
            write_plots(run_dir / "plots", "asyszo", base)
            result.rates.append(rate_report(base, "asyszo"))
    except DivergenceError as exc:
        if exc.trace is not None and len(exc.trace):
            exc.trace.to_csv(run_dir / "trace.csv", wall_clock=wall)
        _write_summary(run_dir, summary + [f"status = {EXIT_DIVERGED}", f"reason = {exc}"])
        return ExperimentResult(EXIT_DIVERGED, run_dir, f"diverged: {exc}")
    except WorkerError as exc:
        if exc.trace is not None and len(exc.trace):
            exc.trace.to_csv(run_dir / "trace.csv", wall_clock=wall)
        _write_summary(run_dir, summary + [f"status = {EXIT_FAILED}", f"reason = {exc}"])
        return ExperimentResult(EXIT_FAILED, run_dir, f"worker failure: {exc}")
    except ConfigurationError as exc:
        return ExperimentResult(EXIT_CONFIG, run_dir, f"configuration error: {exc}")

    report = format_report(result.rates)
    if len(result.rates) == 2:
        a, b = (r.fits[("min_grad_norm_sq", "global_iter")] for r in result.rates)
        if not isinstance(a, str) and not isinstance(b, str):
            report += f"separation.min_grad_norm_sq.vs_global_iter = {a.slope - b.slope!r}\n"
    (run_dir / "rates.txt").write_text(report)

    final = result.traces[label][-1].grad_norm_sq
    summary.append(f"final_grad_norm_sq = {final!r}")
    if cfg["grad_tol"] > 0 and not final <= cfg["grad_tol"]:
        result.status = EXIT_FAILED
        result.message = f"final squared gradient norm {final:.3e} above grad_tol={cfg['grad_tol']:.3e}"
    summary.append(f"status = {result.status}")
    _write_summary(run_dir, summary)
    return result


def _write_summary(run_dir: Path, lines: list[str]) -> None:
    (run_dir / "summary.txt").write_text("".join(f"{line}\n" for line in lines))


def report_error(message: str) -> None:
    print(f"zovr: {message}", file=sys.stderr)
