"""Full-path simulation under P (with the density process Z) and directly under P*.

Both engines evolve log S (and log Z) on a uniform grid. Each path draws from
its own counter-based stream keyed by (seed, global path index), so a batch
can be cut into index ranges and run on any number of worker threads with
bit-identical output.

The batch kernels keep O(1) state per path and accumulate the running sums
needed by the estimators (terminal values and the (M+1)-point averages of S
and S*Z); full grids are written only when ``store_paths=True``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Literal

import numba as nb
import numpy as np

from . import model
from .errors import EngineError, NegativeRateError, ParameterError
from .igou import step_p
from .mmm import AR_STALL, NONFINITE, NONPOSITIVE_1_MINUS_THETA, OK, STATUS_NAMES, step_pstar_detail
from .model import (I_ALPHA, I_C1, I_C2, I_DELTA, I_LAM, I_MU, I_RHO, GridSpec, ModelParams)
from .sampling import STATE_SIZE, RngStream, init_state, std_normal

Method = Literal["algo1", "algo2"]
WORKERS_ENV = "BNSMC_WORKERS"


@dataclass
class PathP:
    """One path under P: prices, density process and variance on the grid."""

    s: np.ndarray
    z: np.ndarray
    sigma_sq: np.ndarray


@dataclass
class PathPstar:
    """One path under P*: prices and variance on the grid."""

    s: np.ndarray
    sigma_sq: np.ndarray
    proposals: int = 0
    n_jumps: int = 0


@dataclass
class PathBatch:
    """Per-path summaries of ``L`` simulated paths.

    ``s_bar`` and ``sz_bar`` are the equally weighted (M+1)-point grid averages of
    S and S*Z. Algo-2 batches have no density process (``z_T`` and ``sz_bar`` are None).
    """

    method: str
    s_T: np.ndarray
    s_bar: np.ndarray
    z_T: np.ndarray | None = None
    sz_bar: np.ndarray | None = None
    proposals: np.ndarray | None = None
    n_jumps: np.ndarray | None = None
    s: np.ndarray | None = None
    z: np.ndarray | None = None
    sigma_sq: np.ndarray | None = None
    M: int = 0
    T: float = 1.0
    seed: int = 0
    path_start: int = 0

    @property
    def L(self) -> int:
        return int(self.s_T.size)


# --------------------------------------------------------------------------
# Compiled per-path kernels
# --------------------------------------------------------------------------

@nb.njit(cache=True, nogil=True)
def path_algo1(state, c, s0, sig0, n_steps, store, s_row, z_row, v_row):
    """Returns (S_T, Z_T, mean_k S, mean_k S Z, status, failing step)."""
    delta = c[I_DELTA]
    sqrt_delta = math.sqrt(delta)
    rho = c[I_RHO]
    lam = c[I_LAM]
    alpha = c[I_ALPHA]
    c1 = c[I_C1]
    c2 = c[I_C2]
    mu = c[I_MU]
    log_s = math.log(s0)
    log_z = 0.0
    sig = sig0
    s_val = s0
    z_val = 1.0
    acc_s = s0
    acc_sz = s0
    if store:
        s_row[0] = s0
        z_row[0] = 1.0
        v_row[0] = sig0
    for k in range(n_steps):
        sig_next = step_p(state, sig, c)
        dw = sqrt_delta * std_normal(state)
        vol = math.sqrt(sig)
        dsig = sig_next - sig
        log_s += vol * dw + rho * dsig + (mu - 0.5 * sig + rho * lam * sig) * delta
        kk = alpha / (sig + c2)
        d_h = dsig + lam * sig * delta
        theta = kk * math.expm1(rho * d_h)
        if not 1.0 - theta > 0.0:
            return np.nan, np.nan, np.nan, np.nan, NONPOSITIVE_1_MINUS_THETA, k
        log_z += -kk * vol * dw + math.log1p(-theta) + (-0.5 * kk * kk * sig + kk * c1) * delta
        sig = sig_next
        s_val = math.exp(log_s)
        z_val = math.exp(log_z)
        if not (math.isfinite(s_val) and math.isfinite(z_val)):
            return np.nan, np.nan, np.nan, np.nan, NONFINITE, k
        acc_s += s_val
        acc_sz += s_val * z_val
        if store:
            s_row[k + 1] = s_val
            z_row[k + 1] = z_val
            v_row[k + 1] = sig
    inv = 1.0 / (n_steps + 1)
    return s_val, z_val, acc_s * inv, acc_sz * inv, OK, -1


@nb.njit(cache=True, nogil=True)
def path_algo2(state, c, s0, sig0, n_steps, store, s_row, v_row):
    """Returns (S_T, mean_k S, proposals, jumps, status, failing step)."""
    delta = c[I_DELTA]
    sqrt_delta = math.sqrt(delta)
    rho = c[I_RHO]
    lam = c[I_LAM]
    alpha = c[I_ALPHA]
    c1 = c[I_C1]
    c2 = c[I_C2]
    log_s = math.log(s0)
    sig = sig0
    s_val = s0
    acc_s = s0
    proposals = 0
    jumps = 0
    if store:
        s_row[0] = s0
        v_row[0] = sig0
    for k in range(n_steps):
        kk = alpha / (sig + c2)
        dw = sqrt_delta * std_normal(state)
        p, s1, s3, n1, n3, used, status = step_pstar_detail(state, sig, kk, c)
        proposals += used
        jumps += n1 + n3
        if status != OK:
            return np.nan, np.nan, proposals, jumps, status, k
        sig_next = p + s1 + s3
        log_s += ((-0.5 * sig + rho * lam * sig - c1 + kk * c2) * delta
                  + math.sqrt(sig) * dw + rho * (sig_next - sig))
        sig = sig_next
        s_val = math.exp(log_s)
        if not math.isfinite(s_val):
            return np.nan, np.nan, proposals, jumps, NONFINITE, k
        acc_s += s_val
        if store:
            s_row[k + 1] = s_val
            v_row[k + 1] = sig
    return s_val, acc_s / (n_steps + 1), proposals, jumps, OK, -1


@nb.njit(cache=True, nogil=True)
def batch_algo1(c, s0, sig0, n_steps, seed, start, store, s_t, z_t, s_bar, sz_bar,
                status, fail_step, s_grid, z_grid, v_grid):
    state = np.empty(STATE_SIZE, dtype=np.uint64)
    dummy = np.empty(1)
    for i in range(s_t.size):
        init_state(state, seed, np.uint64(start + i))
        if store:
            r = path_algo1(state, c, s0, sig0, n_steps, True, s_grid[i], z_grid[i], v_grid[i])
        else:
            r = path_algo1(state, c, s0, sig0, n_steps, False, dummy, dummy, dummy)
        s_t[i], z_t[i], s_bar[i], sz_bar[i], status[i], fail_step[i] = r


@nb.njit(cache=True, nogil=True)
def batch_algo2(c, s0, sig0, n_steps, seed, start, store, s_t, s_bar, proposals, jumps,
                status, fail_step, s_grid, v_grid):
    state = np.empty(STATE_SIZE, dtype=np.uint64)
    dummy = np.empty(1)
    for i in range(s_t.size):
        init_state(state, seed, np.uint64(start + i))
        if store:
            r = path_algo2(state, c, s0, sig0, n_steps, True, s_grid[i], v_grid[i])
        else:
            r = path_algo2(state, c, s0, sig0, n_steps, False, dummy, dummy)
        s_t[i], s_bar[i], proposals[i], jumps[i], status[i], fail_step[i] = r


# --------------------------------------------------------------------------
# Python API
# --------------------------------------------------------------------------

def resolve_workers(workers: int | str | None) -> int:
    """Worker count from an explicit value, ``"auto"``, or the environment."""
    if workers is None:
        workers = os.environ.get(WORKERS_ENV, 1)
    if workers == "auto":
        return os.cpu_count() or 1
    n = int(workers)
    if n < 1:
        raise ParameterError("workers must be >= 1")
    return n


def _prepare(params: ModelParams, grid: GridSpec, method: str) -> np.ndarray:
    model.validate(params)
    if abs(grid.T - params.T) > 1e-12 * params.T:
        raise ParameterError(f"grid horizon {grid.T} differs from params.T {params.T}")
    if method not in ("algo1", "algo2"):
        raise ParameterError(f"unknown method {method!r}")
    if method == "algo2" and params.alpha < 0:
        raise NegativeRateError(params.alpha, detail="the P* engine requires alpha >= 0")
    return model.step_constants(params, grid.delta).array


def _raise_failure(status: np.ndarray, fail_step: np.ndarray, start: int) -> None:
    bad = np.flatnonzero(status != OK)
    if bad.size:
        i = int(bad[0])
        code = STATUS_NAMES[int(status[i])]
        hint = ""
        if status[i] == NONPOSITIVE_1_MINUS_THETA:
            hint = "alpha outside the range where the density-process scheme is usable; use algo2"
        elif status[i] == AR_STALL:
            hint = "acceptance/rejection loop stalled (envelope error)"
        elif status[i] == NONFINITE:
            hint = "overflow in the log-space state"
        raise EngineError(code, path=start + i, step=int(fail_step[i]), detail=hint)


def simulate(params: ModelParams, grid: GridSpec, n_paths: int, seed: int,
             method: Method = "algo2", *, workers: int | str | None = 1,
             store_paths: bool = False, path_start: int = 0) -> PathBatch:
    """Simulate paths ``path_start .. path_start + n_paths - 1``.

    The batch is split into contiguous index ranges, one per worker thread; the
    kernels release the GIL. Output is independent of ``workers``.
    """
    if n_paths < 1:
        raise ParameterError("n_paths must be >= 1")
    c = _prepare(params, grid, method)
    n_workers = min(resolve_workers(workers), n_paths)
    seed64 = np.uint64(int(seed) & ((1 << 64) - 1))
    M = grid.M
    width = M + 1 if store_paths else 0
    s_t = np.empty(n_paths)
    s_bar = np.empty(n_paths)
    status = np.zeros(n_paths, dtype=np.int64)
    fail_step = np.zeros(n_paths, dtype=np.int64)
    s_grid = np.empty((n_paths if store_paths else 0, width))
    v_grid = np.empty_like(s_grid)
    bounds = np.linspace(0, n_paths, n_workers + 1).astype(int)
    chunks = [(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]

    if method == "algo1":
        z_t = np.empty(n_paths)
        sz_bar = np.empty(n_paths)
        z_grid = np.empty_like(s_grid)

        def run(lo, hi):
            sl = slice(lo, hi) if store_paths else slice(0, 0)
            batch_algo1(c, params.S0, params.sigma0_sq, M, seed64, path_start + lo, store_paths,
                        s_t[lo:hi], z_t[lo:hi], s_bar[lo:hi], sz_bar[lo:hi],
                        status[lo:hi], fail_step[lo:hi], s_grid[sl], z_grid[sl], v_grid[sl])
    else:
        proposals = np.zeros(n_paths, dtype=np.int64)
        jumps = np.zeros(n_paths, dtype=np.int64)

        def run(lo, hi):
            sl = slice(lo, hi) if store_paths else slice(0, 0)
            batch_algo2(c, params.S0, params.sigma0_sq, M, seed64, path_start + lo, store_paths,
                        s_t[lo:hi], s_bar[lo:hi], proposals[lo:hi], jumps[lo:hi],
                        status[lo:hi], fail_step[lo:hi], s_grid[sl], v_grid[sl])

    if len(chunks) == 1:
        run(*chunks[0])
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            for f in [pool.submit(run, lo, hi) for lo, hi in chunks]:
                f.result()
    _raise_failure(status, fail_step, path_start)

    common = dict(M=M, T=grid.T, seed=int(seed), path_start=path_start)
    if method == "algo1":
        return PathBatch("algo1", s_T=s_t, s_bar=s_bar, z_T=z_t, sz_bar=sz_bar,
                         s=s_grid if store_paths else None, z=z_grid if store_paths else None,
                         sigma_sq=v_grid if store_paths else None, **common)
    return PathBatch("algo2", s_T=s_t, s_bar=s_bar, proposals=proposals, n_jumps=jumps,
                     s=s_grid if store_paths else None,
                     sigma_sq=v_grid if store_paths else None, **common)


def simulate_path_algo1(params: ModelParams, grid: GridSpec, stream: RngStream) -> PathP:
    """One density-process path driven by ``stream`` (which is advanced)."""
    c = _prepare(params, grid, "algo1")
    s = np.empty(grid.M + 1)
    z = np.empty(grid.M + 1)
    v = np.empty(grid.M + 1)
    r = path_algo1(stream.state, c, params.S0, params.sigma0_sq, grid.M, True, s, z, v)
    _raise_failure(np.array([r[4]]), np.array([r[5]]), stream.stream_id)
    return PathP(s=s, z=z, sigma_sq=v)


def simulate_path_algo2(params: ModelParams, grid: GridSpec, stream: RngStream) -> PathPstar:
    """One path under P* driven by ``stream`` (which is advanced)."""
    c = _prepare(params, grid, "algo2")
    s = np.empty(grid.M + 1)
    v = np.empty(grid.M + 1)
    r = path_algo2(stream.state, c, params.S0, params.sigma0_sq, grid.M, True, s, v)
    _raise_failure(np.array([r[4]]), np.array([r[5]]), stream.stream_id)
    return PathPstar(s=s, sigma_sq=v, proposals=int(r[2]), n_jumps=int(r[3]))
