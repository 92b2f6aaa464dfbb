"""Counter-based random streams and the variate generators built on them.

Stream derivation rule (stable interface): the stream for path ``i`` under
master seed ``s`` is Philox4x64-10 with key ``(s mod 2**64, i)`` and counter
starting at zero. Distinct path indices therefore get distinct keys and
independent sequences, and any path can be generated without touching the
others. The raw output is bit-identical to ``numpy.random.Philox(key=[s, i])``.

A stream's state is a ``uint64[11]`` array so compiled kernels can own and
advance it without Python objects:

    [0:2]  key        [2:6] counter        [6:10] output buffer        [10] buffer position
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

from .errors import ParameterError

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_ZERO = np.uint64(0)
_FOUR = np.uint64(4)
_TWO_M53 = 1.0 / 9007199254740992.0

STATE_SIZE = 11
_MASK64 = (1 << 64) - 1


@nb.njit(cache=True, nogil=True, inline="always")
def _mulhilo(a, b):
    lo = a * b
    a_lo = a & _MASK32
    a_hi = a >> _S32
    b_lo = b & _MASK32
    b_hi = b >> _S32
    p0 = a_lo * b_lo
    p1 = a_lo * b_hi
    p2 = a_hi * b_lo
    p3 = a_hi * b_hi
    mid = (p0 >> _S32) + (p1 & _MASK32) + (p2 & _MASK32)
    hi = p3 + (p1 >> _S32) + (p2 >> _S32) + (mid >> _S32)
    return hi, lo


@nb.njit(cache=True, nogil=True)
def _refill(state):
    # increment the 256-bit counter, then encrypt it into the buffer
    state[2] += _ONE
    if state[2] == _ZERO:
        state[3] += _ONE
        if state[3] == _ZERO:
            state[4] += _ONE
            if state[4] == _ZERO:
                state[5] += _ONE
    c0, c1, c2, c3 = state[2], state[3], state[4], state[5]
    k0, k1 = state[0], state[1]
    for r in range(10):
        if r > 0:
            k0 += _W0
            k1 += _W1
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    state[6] = c0
    state[7] = c1
    state[8] = c2
    state[9] = c3
    state[10] = _ZERO


@nb.njit(cache=True, nogil=True)
def next_u64(state):
    if state[10] >= _FOUR:
        _refill(state)
    pos = state[10]
    out = state[6 + np.int64(pos)]
    state[10] = pos + _ONE
    return out


@nb.njit(cache=True, nogil=True)
def init_state(state, seed, stream_id):
    state[0] = seed
    state[1] = stream_id
    for i in range(2, 10):
        state[i] = _ZERO
    state[10] = _FOUR


@nb.njit(cache=True, nogil=True)
def new_state(seed, stream_id):
    state = np.empty(STATE_SIZE, dtype=np.uint64)
    init_state(state, seed, stream_id)
    return state


# --------------------------------------------------------------------------
# Variates (compiled; each takes the stream state as first argument)
# --------------------------------------------------------------------------

@nb.njit(cache=True, nogil=True)
def uniform(state):
    """U[0, 1) with 53 random bits."""
    return np.float64(next_u64(state) >> _S11) * _TWO_M53


@nb.njit(cache=True, nogil=True)
def uniform_open(state):
    """U(0, 1): never returns 0 or 1."""
    return (np.float64(next_u64(state) >> _S11) + 0.5) * _TWO_M53


@nb.njit(cache=True, nogil=True)
def std_normal(state):
    # Box-Muller, cosine branch only (two uniforms per normal keeps the stream simple)
    u1 = uniform_open(state)
    u2 = uniform(state)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


@nb.njit(cache=True, nogil=True)
def normal(state, variance):
    return math.sqrt(variance) * std_normal(state)


@nb.njit(cache=True, nogil=True)
def _poisson_ptrs(state, lam):
    # Hormann's transformed rejection with squeeze, for lam >= 10
    slam = math.sqrt(lam)
    loglam = math.log(lam)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    while True:
        u = uniform(state) - 0.5
        v = uniform(state)
        us = 0.5 - abs(u)
        k = math.floor((2.0 * a / us + b) * u + lam + 0.43)
        if us >= 0.07 and v <= vr:
            return np.int64(k)
        if k < 0 or (us < 0.013 and v > us):
            continue
        if (math.log(v) + math.log(invalpha) - math.log(a / (us * us) + b)
                <= -lam + k * loglam - math.lgamma(k + 1.0)):
            return np.int64(k)


@nb.njit(cache=True, nogil=True)
def poisson(state, rate):
    """Exact Poisson draw. Rate 0 returns 0 without consuming randomness."""
    if rate <= 0.0:
        return np.int64(0)
    if rate >= 10.0:
        return _poisson_ptrs(state, rate)
    u = uniform(state)
    p = math.exp(-rate)
    cdf = p
    k = 0
    while u > cdf:
        k += 1
        p *= rate / k
        if p == 0.0:
            # cdf saturated below u by rounding; the remaining mass is < 2^-53
            break
        cdf += p
    return np.int64(k)


@nb.njit(cache=True, nogil=True)
def gamma_half(state, scale):
    """Gamma(shape 1/2, scale) via the identity scale * Z^2 / 2, Z ~ N(0, 1)."""
    z = std_normal(state)
    return 0.5 * scale * z * z


@nb.njit(cache=True, nogil=True)
def inverse_gaussian(state, mean, shape):
    """Michael-Schucany-Haas transformation with one rejection step.

    The smaller root is written as ``mean / (1 + phi + sqrt(phi^2 + 2 phi))`` with
    ``phi = mean * nu^2 / (2 shape)``; the textbook form cancels badly when
    ``mean / shape`` is large, which is the regime of the variance stepper.
    """
    nu = std_normal(state)
    phi = mean * nu * nu / (2.0 * shape)
    x = mean / (1.0 + phi + math.sqrt(phi * phi + 2.0 * phi))
    if uniform(state) <= mean / (mean + x):
        return x
    return mean * mean / x


# Batch fillers used by tests and diagnostics.

@nb.njit(cache=True)
def _fill_uniform(state, out):
    for i in range(out.size):
        out[i] = uniform(state)


@nb.njit(cache=True)
def _fill_normal(state, variance, out):
    for i in range(out.size):
        out[i] = normal(state, variance)


@nb.njit(cache=True)
def _fill_poisson(state, rate, out):
    for i in range(out.size):
        out[i] = poisson(state, rate)


@nb.njit(cache=True)
def _fill_gamma_half(state, scale, out):
    for i in range(out.size):
        out[i] = gamma_half(state, scale)


@nb.njit(cache=True)
def _fill_ig(state, mean, shape, out):
    for i in range(out.size):
        out[i] = inverse_gaussian(state, mean, shape)


@nb.njit(cache=True)
def _fill_u64(state, out):
    for i in range(out.size):
        out[i] = next_u64(state)


class RngStream:
    """A single-owner deterministic random stream for one path.

    >>> s = RngStream(seed=1, stream_id=0)
    >>> 0.0 <= s.uniform() < 1.0
    True
    """

    def __init__(self, seed: int, stream_id: int = 0):
        if seed < 0 or stream_id < 0:
            raise ParameterError("seed and stream_id must be non-negative integers")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.state = new_state(np.uint64(self.seed & _MASK64), np.uint64(self.stream_id & _MASK64))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def raw(self, n: int) -> np.ndarray:
        out = np.empty(n, dtype=np.uint64)
        _fill_u64(self.state, out)
        return out

    def uniform(self, size: int | None = None):
        if size is None:
            return uniform(self.state)
        out = np.empty(size)
        _fill_uniform(self.state, out)
        return out

    def normal(self, variance: float = 1.0, size: int | None = None):
        if not variance >= 0:
            raise ParameterError("variance must be >= 0")
        if size is None:
            return normal(self.state, float(variance))
        out = np.empty(size)
        _fill_normal(self.state, float(variance), out)
        return out

    def poisson(self, rate: float, size: int | None = None):
        if not (rate >= 0 and math.isfinite(rate)):
            raise ParameterError(f"Poisson rate must be finite and >= 0, got {rate!r}")
        if size is None:
            return int(poisson(self.state, float(rate)))
        out = np.empty(size, dtype=np.int64)
        _fill_poisson(self.state, float(rate), out)
        return out

    def gamma_half(self, scale: float, size: int | None = None):
        if not scale > 0:
            raise ParameterError("scale must be > 0")
        if size is None:
            return gamma_half(self.state, float(scale))
        out = np.empty(size)
        _fill_gamma_half(self.state, float(scale), out)
        return out

    def inverse_gaussian(self, mean: float, shape: float, size: int | None = None):
        if not (mean > 0 and shape > 0):
            raise ParameterError("mean and shape must be > 0")
        if size is None:
            return inverse_gaussian(self.state, float(mean), float(shape))
        out = np.empty(size)
        _fill_ig(self.state, float(mean), float(shape), out)
        return out
