"""``zovr`` command line: run, certify, replay, rates."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..async_engine.simulator import UpdateLog, replay_check
from ..errors import ConfigurationError, FitError, InfeasibleSettingsError, ReplayError
from ..optimizers import Trace
from ..theory import theorem2_certificate
from .config import load_config
from .rates import format_report, rate_report
from .runner import (
    EXIT_CONFIG,
    EXIT_FAILED,
    EXIT_INFEASIBLE,
    EXIT_OK,
    analysis_settings,
    build_objective,
    report_error,
    run_experiment,
    scenario_from,
    smoothness,
)


class _Parser(argparse.ArgumentParser):
    # Usage errors are configuration errors; argparse's default status 2 means divergence here.
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"zovr: error: {message}\n")


def _load(path: str, seed: int | None, threads: int | None) -> dict:
    cfg = load_config(path)
    if seed is not None:
        cfg["seed"] = seed
    if threads is not None:
        if threads < 1:
            raise ConfigurationError("--threads must be >= 1", key="threads")
        cfg["threads"] = threads
    return cfg


def cmd_run(args) -> int:
    try:
        cfg = _load(args.config, args.seed, args.threads)
    except ConfigurationError as exc:
        report_error(f"configuration error: {exc}")
        return EXIT_CONFIG
    res = run_experiment(cfg, out_root=args.out)
    if res.status != EXIT_OK:
        report_error(res.message)
    elif res.run_dir is not None:
        print(res.run_dir)
    return res.status


def cmd_certify(args) -> int:
    try:
        cfg = _load(args.config, args.seed, None)
        obj = build_objective(cfg)
        cert = theorem2_certificate(analysis_settings(cfg, obj, smoothness(obj, cfg)))
    except ConfigurationError as exc:
        report_error(f"configuration error: {exc}")
        return EXIT_CONFIG
    except InfeasibleSettingsError as exc:
        report_error(f"infeasible settings: {exc}")
        return EXIT_INFEASIBLE
    text = cert.report()
    sys.stdout.write(text)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "certificate.txt").write_text(text)
    if not cert.ok:
        report_error("certificate checks failed")
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_replay(args) -> int:
    logdir = Path(args.logdir)
    try:
        cfg = load_config(logdir / "config.resolved")
        log = UpdateLog.load(logdir / "update_log")
        scenario = scenario_from(cfg)
    except ConfigurationError as exc:
        report_error(f"configuration error: {exc}")
        return EXIT_CONFIG
    try:
        report = replay_check(log, scenario)
    except ReplayError as exc:
        report_error(f"replay failed: {exc}")
        return EXIT_FAILED
    print("\n".join(report.lines()))
    return EXIT_OK


def cmd_rates(args) -> int:
    try:
        reports = [rate_report(Trace.from_csv(p), Path(p).stem) for p in args.traces]
    except (ConfigurationError, OSError, ValueError) as exc:
        report_error(f"cannot read trace: {exc}")
        return EXIT_CONFIG
    except FitError as exc:
        report_error(f"fit failed: {exc}")
        return EXIT_FAILED
    sys.stdout.write(format_report(reports))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="zovr", description="Zeroth-order variance-reduced optimization benchmarks.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", help="output root (overrides ZOVR_OUT and the config)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("certify", help="evaluate the analysis constants for a config")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="also write certificate.txt here")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("replay", help="verify a simulated run's update log")
    p.add_argument("logdir", help="run directory holding config.resolved and update_log/")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("rates", help="fit log-log rates on trace CSVs")
    p.add_argument("traces", nargs="+")
    p.set_defaults(func=cmd_rates)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
