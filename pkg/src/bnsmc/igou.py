"""Exact one-step transition of the IG-OU variance under the physical measure.

Given sigma^2 at t, the variance at t + delta is

    w sigma^2 + X1 + sum_{n=1}^{N} J_n,

with X1 ~ IG(mean a(1-sqrt w)/b, shape a^2 (1-sqrt w)^2), N ~ Poisson(a b (1-sqrt w))
and J_n ~ Gamma(1/2, scale 1/(beta V_n)), V_n = (1 + (w^{-1/2} - 1) U_n)^2.

``sqrt(V_n)`` is uniform on ``[1, w^{-1/2}]``; with that range the Laplace
transform of the increment is exactly ``exp(-a (sqrt(b^2+2v) - sqrt(b^2+2wv)))``,
the IG-OU transition law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from . import model
from .errors import ParameterError
from .model import (I_BETA, I_IG_MEAN, I_IG_SHAPE, I_INV_SQRT_W_M1, I_JUMP_RATE, I_W,
                    ModelParams)
from .sampling import RngStream, gamma_half, inverse_gaussian, poisson, uniform


@dataclass(frozen=True)
class SigmaStep:
    """Components of one exact variance step; ``result = w*sigma_prev + x1 + x2``."""

    w: float
    sigma_sq_prev: float
    x1: float
    x2: float
    n_jumps: int
    result: float


@nb.njit(cache=True, nogil=True)
def step_p_detail(state, sigma_sq_prev, c):
    """Return (x1, x2, n) for one step; ``c`` is the constants vector."""
    x1 = inverse_gaussian(state, c[I_IG_MEAN], c[I_IG_SHAPE])
    n = poisson(state, c[I_JUMP_RATE])
    x2 = 0.0
    if n > 0:
        spread = c[I_INV_SQRT_W_M1]
        beta = c[I_BETA]
        for _ in range(n):
            r = 1.0 + spread * uniform(state)
            x2 += gamma_half(state, 1.0 / (beta * r * r))
    return x1, x2, n


@nb.njit(cache=True, nogil=True)
def step_p(state, sigma_sq_prev, c):
    x1, x2, _ = step_p_detail(state, sigma_sq_prev, c)
    return c[I_W] * sigma_sq_prev + x1 + x2


@nb.njit(cache=True)
def _many_steps(state, sigma_sq_prev, c, out):
    for i in range(out.size):
        out[i] = step_p(state, sigma_sq_prev, c)


@nb.njit(cache=True)
def _chain(state, sigma_sq0, c, out):
    s = sigma_sq0
    for i in range(out.size):
        s = step_p(state, s, c)
        out[i] = s


def _consts(params: ModelParams, delta: float) -> np.ndarray:
    if not delta > 0:
        raise ParameterError("delta must be > 0")
    return model.step_constants(params, float(delta)).array


def step_sigma2_P(sigma_sq_prev: float, delta: float, params: ModelParams,
                  stream: RngStream) -> float:
    """Draw sigma^2_{t+delta} given sigma^2_t = ``sigma_sq_prev`` under P."""
    if not sigma_sq_prev > 0:
        raise ParameterError("sigma_sq_prev must be > 0")
    return step_p(stream.state, float(sigma_sq_prev), _consts(params, delta))


def step_sigma2_P_detail(sigma_sq_prev: float, delta: float, params: ModelParams,
                         stream: RngStream) -> SigmaStep:
    if not sigma_sq_prev > 0:
        raise ParameterError("sigma_sq_prev must be > 0")
    c = _consts(params, delta)
    x1, x2, n = step_p_detail(stream.state, float(sigma_sq_prev), c)
    w = float(c[I_W])
    return SigmaStep(w=w, sigma_sq_prev=sigma_sq_prev, x1=x1, x2=x2, n_jumps=int(n),
                     result=w * sigma_sq_prev + x1 + x2)


def sample_steps_P(sigma_sq_prev: float, delta: float, params: ModelParams,
                   stream: RngStream, n: int) -> np.ndarray:
    """``n`` independent one-step draws from the same starting variance."""
    out = np.empty(n)
    _many_steps(stream.state, float(sigma_sq_prev), _consts(params, delta), out)
    return out


def simulate_variance_chain(sigma_sq0: float, delta: float, params: ModelParams,
                            stream: RngStream, n_steps: int) -> np.ndarray:
    """Variance path sigma^2_{t_1..t_n} under P (sigma^2_{t_0} excluded)."""
    out = np.empty(n_steps)
    _chain(stream.state, float(sigma_sq0), _consts(params, delta), out)
    return out


def stationary_mean(params: ModelParams) -> float:
    """Mean a/b of the IG(a, b) stationary law."""
    return params.a / params.b


def transition_laplace_exact(v: float, sigma_sq_prev: float, delta: float,
                             params: ModelParams) -> float:
    """Closed-form E[exp(-v sigma^2_{t+delta}) | sigma^2_t] under P."""
    a, b = params.a, params.b
    w = math.exp(-params.lam * delta)
    return math.exp(-v * w * sigma_sq_prev
                    - a * (math.sqrt(b * b + 2 * v) - math.sqrt(b * b + 2 * w * v)))
