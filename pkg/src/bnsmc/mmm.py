"""Variance transition under the minimal martingale measure.

Under P* the jump intensity of the subordinator is tilted by ``1 + K (1 - e^{rho x})``
with ``K`` frozen at the left end of the step. The variance step becomes the
P-step plus two independent compound-Poisson sums,

    N_1 ~ Poisson(K a beta / sqrt(2 pi) C_1),  X^(1) ~ f~_1,
    N_3 ~ Poisson(K a / (2 sqrt(2 pi)) C_3),   X^(3) ~ f~_3,

whose jump sizes are drawn by acceptance/rejection from the Gamma(1/2, 1/beta)
proposal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

from . import model
from .errors import EngineError, NegativeRateError, ParameterError
from .igou import step_p
from .model import (I_BETA, I_COEF1, I_COEF3, I_INV_SQRT_W_M1, I_INV_W, I_RHO, ModelParams,
                    ar_ratio_scalar, ratio_bounds)
from .sampling import RngStream, gamma_half, poisson, uniform

AR_MAX_PROPOSALS = 10_000_000
# Slack around the squeeze bounds; larger than the quadrature tolerance so that
# a squeeze decision always agrees with direct evaluation of the ratio.
_SQUEEZE_SLACK = 4.0 * model.RATIO_TOL

OK = 0
NONPOSITIVE_1_MINUS_THETA = 1
NEGATIVE_RATE = 2
AR_STALL = 3
NONFINITE = 4
STATUS_NAMES = {OK: "OK", NONPOSITIVE_1_MINUS_THETA: "NONPOSITIVE_1_MINUS_THETA",
                NEGATIVE_RATE: "NEGATIVE_RATE", AR_STALL: "AR_STALL", NONFINITE: "NONFINITE"}


@dataclass(frozen=True)
class JumpAdjustment:
    """Correction sums of one P* variance step."""

    n1: int
    n3: int
    sum1: float
    sum3: float
    proposals_used: int


@nb.njit(cache=True, nogil=True)
def ar_accept(m, y, u, rho, beta, inv_w, inv_sqrt_w_m1):
    """Accept/reject decision ``u <= f~_m(y)/g_m(y)`` using squeeze bounds first."""
    if not y > 0.0:
        return False
    lo, hi = ratio_bounds(m, y, rho, beta, inv_w)
    if u <= lo - _SQUEEZE_SLACK:
        return True
    if u > hi + _SQUEEZE_SLACK:
        return False
    return u <= ar_ratio_scalar(m, y, rho, beta, inv_w, inv_sqrt_w_m1)


@nb.njit(cache=True, nogil=True)
def ar_accept_direct(m, y, u, rho, beta, inv_w, inv_sqrt_w_m1):
    if not y > 0.0:
        return False
    return u <= ar_ratio_scalar(m, y, rho, beta, inv_w, inv_sqrt_w_m1)


@nb.njit(cache=True, nogil=True)
def sample_jump(state, m, c):
    """One draw from f~_m. Returns (y, proposals); y < 0 signals a stalled loop."""
    rho = c[I_RHO]
    beta = c[I_BETA]
    inv_w = c[I_INV_W]
    spread = c[I_INV_SQRT_W_M1]
    scale = 1.0 / beta
    for i in range(AR_MAX_PROPOSALS):
        y = gamma_half(state, scale)
        u = uniform(state)
        if ar_accept(m, y, u, rho, beta, inv_w, spread):
            return y, i + 1
    return -1.0, AR_MAX_PROPOSALS


@nb.njit(cache=True, nogil=True)
def step_pstar_detail(state, sigma_sq_prev, k, c):
    """One P* variance step in the order N1, X^(1)s, N3, X^(3)s, P-step.

    Returns (p_result, sum1, sum3, n1, n3, proposals, status).
    """
    if k < 0.0:
        return np.nan, 0.0, 0.0, 0, 0, 0, NEGATIVE_RATE
    proposals = 0
    n1 = poisson(state, k * c[I_COEF1])
    sum1 = 0.0
    for _ in range(n1):
        y, used = sample_jump(state, 1, c)
        proposals += used
        if y < 0.0:
            return np.nan, 0.0, 0.0, n1, 0, proposals, AR_STALL
        sum1 += y
    n3 = poisson(state, k * c[I_COEF3])
    sum3 = 0.0
    for _ in range(n3):
        y, used = sample_jump(state, 3, c)
        proposals += used
        if y < 0.0:
            return np.nan, 0.0, 0.0, n1, n3, proposals, AR_STALL
        sum3 += y
    p_result = step_p(state, sigma_sq_prev, c)
    return p_result, sum1, sum3, n1, n3, proposals, OK


@nb.njit(cache=True)
def _many_jumps(state, m, c, out):
    total = 0
    for i in range(out.size):
        y, used = sample_jump(state, m, c)
        out[i] = y
        total += used
        if y < 0.0:
            break
    return total


@nb.njit(cache=True)
def _trial_count(state, m, c, n):
    accepted = 0
    for _ in range(n):
        y = gamma_half(state, 1.0 / c[I_BETA])
        u = uniform(state)
        if ar_accept(m, y, u, c[I_RHO], c[I_BETA], c[I_INV_W], c[I_INV_SQRT_W_M1]):
            accepted += 1
    return accepted


@nb.njit(cache=True)
def _many_pstar_steps(state, sigma_sq_prev, k, c, out):
    for i in range(out.size):
        p, s1, s3, _, _, _, status = step_pstar_detail(state, sigma_sq_prev, k, c)
        if status != OK:
            return status
        out[i] = p + s1 + s3
    return OK


def _consts(params: ModelParams, delta: float) -> np.ndarray:
    if not delta > 0:
        raise ParameterError("delta must be > 0")
    return model.step_constants(params, float(delta)).array


def _require_jumps(params: ModelParams) -> None:
    if params.rho == 0:
        raise ParameterError("rho = 0: the jump correction vanishes and f~_m is undefined")


def sample_jump_adjustment(m: int, params: ModelParams, delta: float, stream: RngStream) -> float:
    """Draw one jump size X^(m) ~ f~_m by acceptance/rejection."""
    model._check_m(m)
    _require_jumps(params)
    y, _ = sample_jump(stream.state, m, _consts(params, delta))
    if y < 0:
        raise EngineError("AR_STALL", detail=f"{AR_MAX_PROPOSALS} proposals rejected (m={m})")
    return y


def sample_jumps(m: int, params: ModelParams, delta: float, stream: RngStream,
                 n: int) -> tuple[np.ndarray, int]:
    """``n`` accepted draws from f~_m and the number of proposals consumed."""
    model._check_m(m)
    _require_jumps(params)
    out = np.empty(n)
    used = _many_jumps(stream.state, m, _consts(params, delta), out)
    if n and out.min() < 0:
        raise EngineError("AR_STALL", detail=f"m={m}")
    return out, int(used)


def acceptance_trials(m: int, params: ModelParams, delta: float, stream: RngStream,
                      n_proposals: int) -> int:
    """Number of accepted proposals among ``n_proposals`` independent A/R trials."""
    model._check_m(m)
    _require_jumps(params)
    return int(_trial_count(stream.state, m, _consts(params, delta), int(n_proposals)))


def poisson_rates(k: float, params: ModelParams, delta: float) -> tuple[float, float]:
    """Rates of N1 and N3 for a frozen K."""
    sc = model.step_constants(params, float(delta))
    return k * sc.coef1, k * sc.coef3


def step_sigma2_Pstar_detail(sigma_sq_prev: float, k_prev: float, delta: float,
                             params: ModelParams, stream: RngStream
                             ) -> tuple[float, JumpAdjustment]:
    """P-step value and the jump adjustment of one P* step."""
    if not sigma_sq_prev > 0:
        raise ParameterError("sigma_sq_prev must be > 0")
    if k_prev < 0:
        raise NegativeRateError(min(poisson_rates(k_prev, params, delta)),
                                detail="K < 0 (alpha < 0) gives negative Poisson rates")
    p, s1, s3, n1, n3, used, status = step_pstar_detail(
        stream.state, float(sigma_sq_prev), float(k_prev), _consts(params, delta))
    if status != OK:
        raise EngineError(STATUS_NAMES[status])
    return p, JumpAdjustment(n1=int(n1), n3=int(n3), sum1=s1, sum3=s3, proposals_used=int(used))


def step_sigma2_Pstar(sigma_sq_prev: float, k_prev: float, delta: float, params: ModelParams,
                      stream: RngStream) -> float:
    """Draw sigma^2_{t+delta} given sigma^2_t under P*, with K held at ``k_prev``."""
    p, adj = step_sigma2_Pstar_detail(sigma_sq_prev, k_prev, delta, params, stream)
    return p + adj.sum1 + adj.sum3


def sample_steps_Pstar(sigma_sq_prev: float, k_prev: float, delta: float, params: ModelParams,
                       stream: RngStream, n: int) -> np.ndarray:
    if k_prev < 0:
        raise NegativeRateError(min(poisson_rates(k_prev, params, delta)))
    out = np.empty(n)
    status = _many_pstar_steps(stream.state, float(sigma_sq_prev), float(k_prev),
                               _consts(params, delta), out)
    if status != OK:
        raise EngineError(STATUS_NAMES[status])
    return out
