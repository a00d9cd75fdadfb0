"""Flat ``key = value`` experiment configs.

``#`` starts a comment. Keys are fixed (see ``SCHEMA``); unknown keys, missing
required keys and out-of-range values raise :class:`ConfigurationError` naming
the key and, when it came from a file, the line. The resolved dump lists every
key with its effective value, so loading a dump reproduces it exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from ..errors import ConfigurationError

REQUIRED = ("objective", "algorithm")


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return text

    return parse


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError("must be true or false")


def _float(text: str) -> float:
    v = float(text)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _gamma(text: str) -> float | str:
    return "auto" if text == "auto" else _float(text)


def _str(text: str) -> str:
    return text


@dataclass(frozen=True)
class Field:
    parse: Callable[[str], Any]
    default: Any
    doc: str


SCHEMA: dict[str, Field] = {
    # problem
    "objective": Field(_choice("ridge", "logistic", "lssvm"), None, "objective kind"),
    "l": Field(int, 500, "number of components"),
    "N": Field(int, 20, "dimension"),
    "lambda": Field(_float, 0.01, "l2 regularization"),
    "data_seed": Field(int, 42, "synthetic data seed"),
    "label_noise": Field(_float, 0.5, "label noise level"),
    "data_csv": Field(_str, "", "dataset CSV; overrides l, N and data_seed when set"),
    # run
    "algorithm": Field(_choice("dszovr", "asyszo"), None, "algorithm"),
    "gamma": Field(_gamma, "auto", "step size; auto = u0 b / (L_tilde l^alpha)"),
    "gamma0": Field(_float, 0.1, "baseline step scale, gamma_t = gamma0 / sqrt(t+1)"),
    "S": Field(int, 20, "epochs"),
    "m": Field(int, 500, "inner iterations per epoch"),
    "b": Field(int, 4, "mini-batch size"),
    "Y": Field(int, 5, "coordinate block size"),
    "mu": Field(_float, 1e-4, "smoothing radius, all coordinates"),
    "seed": Field(int, 0, "sampler seed"),
    "replicates": Field(int, 1, "independent runs with seeds seed..seed+R-1; rates use their mean"),
    # backend
    "backend": Field(_choice("sequential", "async", "simulated"), "sequential", "execution backend"),
    "threads": Field(int, 1, "worker threads for backend=async"),
    "tau": Field(int, 0, "delay bound for backend=simulated"),
    "delay_law": Field(_choice("none", "fixed", "uniform", "schedule"), "none", "simulated delay law"),
    "delay": Field(int, 0, "delay for delay_law=fixed"),
    "mask_policy": Field(_choice("all-ones", "random", "schedule"), "all-ones", "simulated overwrite masks"),
    "p_keep": Field(_float, 1.0, "mask flag probability for mask_policy=random"),
    "schedule": Field(_str, "", "schedule file with t,delay,maskbits lines"),
    "scenario_seed": Field(int, 0, "seed for simulated delays and masks"),
    # theory
    "theory": Field(_bool, False, "certify settings and reject infeasible step sizes"),
    "alpha": Field(_float, 0.5, "batch exponent in the prescribed step size"),
    "u0": Field(_float, 0.9, "step-size scale in the prescribed step size"),
    "constants": Field(_choice("analytic", "empirical"), "analytic", "source of L, L_tilde, L_hat"),
    "constants_trials": Field(int, 50, "sample pairs for constants=empirical"),
    # output
    "out": Field(_str, "runs", "output root"),
    "name": Field(_str, "", "run directory name; empty = derived from the config"),
    "trace_every": Field(int, 0, "record every k iterations; 0 = once per epoch"),
    "trace_per_decade": Field(int, 0, "log-spaced records per decade; 0 = off"),
    "wall_clock": Field(_bool, False, "write measured wall time instead of 0.0"),
    "grad_tol": Field(_float, 0.0, "target final squared gradient norm; 0 = none"),
    "compare_baseline": Field(_bool, False, "also run asyszo at the same evaluation budget"),
}


def _check(cfg: dict[str, Any], lines: dict[str, int]) -> None:
    def fail(key: str, msg: str):
        raise ConfigurationError(f"{key}: {msg}", key=key, line=lines.get(key))

    for key in ("l", "N", "S", "b", "Y", "replicates", "threads", "constants_trials"):
        if cfg[key] < 1:
            fail(key, f"must be >= 1, got {cfg[key]}")
    for key in ("m", "tau", "delay", "trace_every", "trace_per_decade"):
        if cfg[key] < 0:
            fail(key, f"must be >= 0, got {cfg[key]}")
    if cfg["lambda"] < 0:
        fail("lambda", "must be >= 0")
    if cfg["gamma"] != "auto" and not cfg["gamma"] > 0:
        fail("gamma", "must be > 0 or auto")
    for key in ("gamma0", "mu"):
        if not cfg[key] > 0:
            fail(key, "must be > 0")
    if not cfg["data_csv"]:
        if cfg["b"] > cfg["l"]:
            fail("b", f"b={cfg['b']} exceeds l={cfg['l']}")
        if cfg["Y"] > cfg["N"]:
            fail("Y", f"Y={cfg['Y']} exceeds N={cfg['N']}")
    if not 0 <= cfg["p_keep"] <= 1:
        fail("p_keep", "must lie in [0, 1]")
    if cfg["backend"] == "simulated" and cfg["delay_law"] == "fixed" and cfg["delay"] > cfg["tau"]:
        fail("delay", f"fixed delay {cfg['delay']} exceeds tau={cfg['tau']}")
    if cfg["backend"] != "sequential" and cfg["algorithm"] != "dszovr":
        fail("backend", f"backend={cfg['backend']} runs algorithm=dszovr only")
    if cfg["backend"] == "async" and cfg["replicates"] != 1:
        fail("replicates", "backend=async does not support replicates")
    for key in ("alpha", "u0"):
        if not 0 < cfg[key] < 1:
            fail(key, "must lie in (0, 1)")
    if cfg["grad_tol"] < 0:
        fail("grad_tol", "must be >= 0")
    for key in ("data_csv", "schedule"):
        if cfg[key] and not Path(cfg[key]).is_file():
            fail(key, f"file not found: {cfg[key]}")
    uses_schedule = "schedule" in (cfg["delay_law"], cfg["mask_policy"])
    if cfg["backend"] == "simulated" and uses_schedule and not cfg["schedule"]:
        fail("schedule", "required by delay_law/mask_policy=schedule")


def parse_config(text: str, source: str = "<config>", base_dir: Path | None = None) -> dict[str, Any]:
    """Parse and validate config text; relative file paths resolve against ``base_dir``."""
    cfg: dict[str, Any] = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigurationError(f"{source}:{lineno}: expected 'key = value'", line=lineno)
        if key not in SCHEMA:
            raise ConfigurationError(f"{source}:{lineno}: unknown key {key!r}", key=key, line=lineno)
        if key in cfg:
            raise ConfigurationError(f"{source}:{lineno}: duplicate key {key!r}", key=key, line=lineno)
        try:
            cfg[key] = SCHEMA[key].parse(value)
        except ValueError as exc:
            raise ConfigurationError(f"{source}:{lineno}: bad value for {key!r}: {exc}", key=key, line=lineno) from None
        lines[key] = lineno
    for key in REQUIRED:
        if key not in cfg:
            raise ConfigurationError(f"{source}: missing required key {key!r}", key=key)
    for key, spec in SCHEMA.items():
        cfg.setdefault(key, spec.default)
    if base_dir is not None:
        for key in ("data_csv", "schedule"):
            if cfg[key] and not Path(cfg[key]).is_absolute():
                cfg[key] = str((base_dir / cfg[key]).resolve())
    _check(cfg, lines)
    return cfg


def load_config(path: str | Path) -> dict[str, Any]:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {p}: {exc.strerror}") from None
    return parse_config(text, str(p), p.parent)


def _render(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_config(cfg: dict[str, Any]) -> str:
    """Every schema key, in schema order, with its resolved value."""
    return "".join(f"{key} = {_render(cfg[key])}\n" for key in SCHEMA)
