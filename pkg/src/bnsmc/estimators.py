"""Monte Carlo estimators of P*-expectations from simulated path batches.

For the density-process engine (algo1) every summand is reweighted by Z;
for the direct engine (algo2) paths are already P*-distributed. The interest
rate is zero, so option prices are plain expected payoffs.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Literal

import numpy as np

from .engines import PathBatch, PathP, PathPstar
from .errors import ParameterError

Estimand = Literal["terminal_mean", "asian_mean", "euro_call", "asian_call",
                   "euro_put", "asian_put"]
PAYOFFS = ("euro_call", "asian_call", "euro_put", "asian_put")


@dataclass
class EstimateReport:
    estimand: str
    method: str
    point: float
    stderr: float
    error_percent: float | None = None
    wall_time_sec: float | None = None
    alpha: float | None = None
    M: int | None = None
    L: int | None = None
    seed: int | None = None
    strike: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def error_percent(S0: float, point: float) -> float:
    """(S0 - point) / S0 * 100; overestimates give a negative value."""
    if not S0 > 0:
        raise ParameterError("S0 must be > 0")
    return (S0 - point) / S0 * 100.0


def _as_batch(paths, method: str) -> PathBatch:
    if method not in ("algo1", "algo2"):
        raise ParameterError(f"unknown method {method!r}")
    if isinstance(paths, PathBatch):
        if paths.method != method:
            raise TypeError(f"{paths.method} batch cannot be estimated as {method}")
        return paths
    paths = list(paths)
    if not paths:
        raise ParameterError("no paths")
    want = PathP if method == "algo1" else PathPstar
    if not all(isinstance(p, want) for p in paths):
        raise TypeError(f"method {method} needs {want.__name__} paths")
    s = np.stack([p.s for p in paths])
    batch = PathBatch(method, s_T=s[:, -1].copy(), s_bar=s.mean(axis=1), M=s.shape[1] - 1)
    if method == "algo1":
        z = np.stack([p.z for p in paths])
        batch.z_T = z[:, -1].copy()
        batch.sz_bar = (s * z).mean(axis=1)
    return batch


def _summarize(x: np.ndarray) -> tuple[float, float]:
    if x.size < 2:
        raise ParameterError("need at least 2 paths")
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def _report(estimand, method, x, batch: PathBatch, S0=None, **extra) -> EstimateReport:
    point, se = _summarize(x)
    return EstimateReport(estimand=estimand, method=method, point=point, stderr=se,
                          error_percent=None if S0 is None else error_percent(S0, point),
                          M=batch.M, L=batch.L, seed=batch.seed, **extra)


def terminal_summands(batch: PathBatch) -> np.ndarray:
    return batch.s_T * batch.z_T if batch.method == "algo1" else batch.s_T


def asian_summands(batch: PathBatch) -> np.ndarray:
    return batch.sz_bar if batch.method == "algo1" else batch.s_bar


def estimate_terminal_mean(paths, method: str, S0: float | None = None) -> EstimateReport:
    """(1/L) sum S_T Z_T (algo1) or (1/L) sum S_T (algo2).

    ``S0`` defaults to the first grid value when full paths are supplied.
    """
    batch = _as_batch(paths, method)
    return _report("terminal_mean", method, terminal_summands(batch), batch,
                   S0=_default_s0(paths, S0))


def estimate_asian_mean(paths, method: str, grid=None, S0: float | None = None) -> EstimateReport:
    """(1/(L(M+1))) sum_l sum_k S_{t_k} Z_{t_k}, or without Z for algo2.

    The per-path time average is one i.i.d. summand for the standard error.
    """
    batch = _as_batch(paths, method)
    if grid is not None and batch.M and grid.M != batch.M:
        raise ParameterError(f"grid has M={grid.M} but paths have M={batch.M}")
    return _report("asian_mean", method, asian_summands(batch), batch, S0=_default_s0(paths, S0))


def _default_s0(paths, S0):
    if S0 is not None:
        return S0
    if isinstance(paths, PathBatch):
        return float(paths.s[0, 0]) if paths.s is not None and paths.s.size else None
    first = next(iter(paths), None)
    return float(first.s[0]) if first is not None else None


def payoff_summands(batch: PathBatch, payoff: str, strike: float) -> np.ndarray:
    if payoff not in PAYOFFS:
        raise ParameterError(f"unknown payoff {payoff!r}")
    under = batch.s_T if payoff.startswith("euro") else batch.s_bar
    if payoff.endswith("call"):
        x = np.maximum(under - strike, 0.0)
    else:
        x = np.maximum(strike - under, 0.0)
    if batch.method == "algo1":
        x = x * batch.z_T
    return x


def price_option(paths, method: str, payoff: str, strike: float) -> EstimateReport:
    """Zero-rate price E*[(S - K)^+] with S = S_T or the grid average.

    For algo1 the payoff is weighted by the terminal density Z_T.
    """
    if not strike >= 0:
        raise ParameterError("strike must be >= 0")
    batch = _as_batch(paths, method)
    return _report(payoff, method, payoff_summands(batch, payoff, strike), batch,
                   strike=float(strike))


def cross_method_z(a: EstimateReport, b: EstimateReport) -> float:
    """Difference of two estimates in units of their combined standard error."""
    se = math.hypot(a.stderr, b.stderr)
    return (a.point - b.point) / se if se > 0 else (0.0 if a.point == b.point else math.inf)

