"""Run configuration: INI file with ``[model]`` and ``[run]`` sections plus overrides.

Example::

    [model]
    S0 = 468.40
    sigma0_sq = 0.0041
    lambda = 2.4958
    a = 0.0872
    b = 11.98
    rho = -4.7039
    alpha = 0.1
    T = 1

    [run]
    steps = 100
    paths = 100000
    seed = 1
    algo = algo1
    format = csv
    out = result.csv
    workers = auto

Missing model keys default to the calibrated parameter set. Precedence for
every field is: command-line flag, then (for ``workers``) the ``BNSMC_WORKERS``
environment variable, then the file, then the default.
"""

from __future__ import annotations

import configparser
import csv
import io
import math
import os
from dataclasses import dataclass, field, fields

from .engines import WORKERS_ENV
from .errors import BNSError
from .estimators import PAYOFFS
from .model import ModelParams, paper_params

CSV_HEADER = ("alpha", "M", "L", "error_terminal_pct", "error_asian_pct", "stderr_terminal",
              "stderr_asian", "time_sec", "seed")
MEAN_ESTIMANDS = ("terminal_mean", "asian_mean")

# config key -> ModelParams field
MODEL_KEYS = {"S0": "S0", "sigma0_sq": "sigma0_sq", "lambda": "lam", "a": "a", "b": "b",
              "rho": "rho", "alpha": "alpha", "T": "T"}
RUN_KEYS = ("steps", "paths", "seed", "algo", "format", "out", "workers", "estimands", "strike")


class ConfigError(BNSError):
    """Unparseable or inconsistent configuration; ``field`` names the offending entry."""

    code = "CONFIG_ERROR"

    def __init__(self, field_path: str, message: str):
        self.field = field_path
        super().__init__(f"{field_path}: {message}")


@dataclass
class RunConfig:
    params: ModelParams = field(default_factory=paper_params)
    M: int = 100
    L: int = 100_000
    seed: int = 1
    algo: str = "algo2"
    estimands: tuple[str, ...] = MEAN_ESTIMANDS
    strike: float | None = None
    out: str | None = None
    format: str = "csv"
    workers: int | str = 1

    def check(self) -> "RunConfig":
        if self.M < 1:
            raise ConfigError("run.steps", "must be >= 1")
        if self.L < 2:
            raise ConfigError("run.paths", "must be >= 2")
        if self.seed < 0:
            raise ConfigError("run.seed", "must be >= 0")
        if self.algo not in ("algo1", "algo2"):
            raise ConfigError("run.algo", f"must be algo1 or algo2, got {self.algo!r}")
        if self.format not in ("csv", "json"):
            raise ConfigError("run.format", f"must be csv or json, got {self.format!r}")
        for e in self.estimands:
            if e not in MEAN_ESTIMANDS + PAYOFFS:
                raise ConfigError("run.estimands", f"unknown estimand {e!r}")
        if self.workers != "auto" and not (isinstance(self.workers, int) and self.workers >= 1):
            raise ConfigError("run.workers", "must be a positive integer or 'auto'")
        if self.out:
            parent = os.path.dirname(os.path.abspath(self.out))
            if not (os.path.isdir(parent) and os.access(parent, os.W_OK)):
                raise ConfigError("run.out", f"directory {parent!r} is not writable")
        return self


def _number(section: str, key: str, raw: str, kind=float):
    try:
        v = kind(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{section}.{key}", f"cannot parse {raw!r} as {kind.__name__}") from None
    if kind is float and not math.isfinite(v):
        raise ConfigError(f"{section}.{key}", f"must be finite, got {raw!r}")
    return v


def parse_workers(raw, where: str = "run.workers") -> int | str:
    if isinstance(raw, int):
        return raw
    raw = str(raw).strip()
    if raw == "auto":
        return "auto"
    return _number(*where.split("."), raw, int)


def read_config_text(text: str, source: str = "<config>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keep key case (S0, T)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(source, str(exc).replace("\n", " ")) from None
    for sec in cp.sections():
        if sec not in ("model", "run"):
            raise ConfigError(sec, "unknown section (expected [model] and/or [run])")
    cfg = RunConfig()
    if cp.has_section("model"):
        changes = {}
        for key, raw in cp.items("model"):
            if key not in MODEL_KEYS:
                raise ConfigError(f"model.{key}", "unknown key")
            changes[MODEL_KEYS[key]] = _number("model", key, raw)
        cfg.params = cfg.params.with_(**changes)
    if cp.has_section("run"):
        for key, raw in cp.items("run"):
            if key not in RUN_KEYS:
                raise ConfigError(f"run.{key}", "unknown key")
            if key == "steps":
                cfg.M = _number("run", key, raw, int)
            elif key == "paths":
                cfg.L = _number("run", key, raw, int)
            elif key == "seed":
                cfg.seed = _number("run", key, raw, int)
            elif key == "strike":
                cfg.strike = _number("run", key, raw)
            elif key == "workers":
                cfg.workers = parse_workers(raw)
            elif key == "estimands":
                cfg.estimands = tuple(e.strip() for e in raw.split(",") if e.strip())
            else:
                setattr(cfg, key, raw.strip())
    return cfg


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(path, exc.strerror or str(exc)) from None
    return read_config_text(text, source=path)


def env_workers() -> int | str | None:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None or raw.strip() == "":
        return None
    return parse_workers(raw, where=f"env.{WORKERS_ENV}")


@dataclass
class TableRow:
    alpha: float
    M: int
    L: int
    error_terminal_pct: float
    error_asian_pct: float
    stderr_terminal: float
    stderr_asian: float
    time_sec: float | None
    seed: int

    def values(self) -> list[str]:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            out.append("" if v is None else repr(float(v)) if isinstance(v, float) else str(v))
        return out


def rows_to_csv(rows: list[TableRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.values())
    return buf.getvalue()


def read_csv_rows(text: str) -> list[dict[str, str]]:
    return list(csv.DictReader(io.StringIO(text)))
