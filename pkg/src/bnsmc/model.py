"""Parameters, closed-form constants and densities of the IG-OU BNS model.

Everything here is deterministic. The Levy density of the subordinator
``H_lambda`` is

    nu(x) = lambda * a / (2 sqrt(2 pi)) * x^{-3/2} (1 + b^2 x) exp(-b^2 x / 2),

and the jump-correction densities ``f_m`` (m = 1, 3) of the changed-measure
variance step are integrals over ``z`` in ``[1, 1/w]`` with ``w = exp(-lambda delta)``.
Their A/R acceptance ratio ``f~_m / g_m`` is evaluated by an adaptive
Gauss-Kronrod rule compiled with numba, since it sits on the sampler hot path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numba as nb
import numpy as np

from .errors import AssumptionViolation, ParameterError

SQRT_2PI = math.sqrt(2.0 * math.pi)
SQRT_PI = math.sqrt(math.pi)

# Absolute tolerance on the A/R ratio f~_m / g_m, which lives in [0, 1].
RATIO_TOL = 1e-12
# Below this value of |rho| y z, 1 - e^{rho y z} is replaced by its first-order bound.
SMALL_ARG = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Raw parameter vector of the model.

    ``lam`` is the time-scale parameter lambda; ``rho <= 0`` is the leverage.
    """

    S0: float
    sigma0_sq: float
    lam: float
    a: float
    b: float
    rho: float
    alpha: float
    T: float = 1.0

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)


def paper_params(alpha: float = 0.1, T: float = 1.0) -> ModelParams:
    """The calibrated parameter set used for all reported experiments."""
    return ModelParams(S0=468.40, sigma0_sq=0.0041, lam=2.4958, a=0.0872, b=11.98,
                       rho=-4.7039, alpha=alpha, T=T)


@dataclass(frozen=True)
class GridSpec:
    """Uniform time grid with ``M`` steps on ``[0, T]``."""

    M: int
    T: float = 1.0

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise ParameterError(f"M must be an integer >= 1, got {self.M!r}")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ParameterError(f"T must be positive, got {self.T!r}")

    @property
    def delta(self) -> float:
        return self.T / self.M

    def decay(self, lam: float) -> float:
        """w = exp(-lambda * delta)."""
        return math.exp(-lam * self.delta)

    @property
    def times(self) -> np.ndarray:
        t = np.arange(self.M + 1, dtype=float) * self.delta
        t[-1] = self.T
        return t


@dataclass(frozen=True)
class LevyConstants:
    c1_rho: float
    c2_rho: float
    beta: float
    mu: float


@dataclass(frozen=True)
class ValidatedParams:
    """Parameters that passed :func:`validate`, with derived constants."""

    params: ModelParams
    constants: LevyConstants
    margin1: float
    margin2: float


def _check_domain(p: ModelParams) -> None:
    for name in ("S0", "sigma0_sq", "lam", "a", "b", "T"):
        v = getattr(p, name)
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
            raise ParameterError(f"{name} must be finite and > 0, got {v!r}")
    if not (math.isfinite(p.rho) and p.rho <= 0):
        raise ParameterError(f"rho must be finite and <= 0, got {p.rho!r}")
    if not math.isfinite(p.alpha):
        raise ParameterError(f"alpha must be finite, got {p.alpha!r}")


def levy_moment_1(p: ModelParams) -> float:
    """C1_rho = int (e^{rho x} - 1) nu(dx) = rho lambda a / sqrt(b^2 - 2 rho)."""
    return p.rho * p.lam * p.a / math.sqrt(p.b * p.b - 2.0 * p.rho)


def levy_moment_2(p: ModelParams) -> float:
    """C2_rho = int (e^{rho x} - 1)^2 nu(dx).

    Evaluated as ``2 |rho| lambda a (1/sqrt(b^2-2rho) - 1/sqrt(b^2-4rho))`` with the
    difference rewritten to avoid cancellation for small |rho|.
    """
    b2 = p.b * p.b
    s2 = math.sqrt(b2 - 2.0 * p.rho)
    s4 = math.sqrt(b2 - 4.0 * p.rho)
    # 1/s2 - 1/s4 = (s4 - s2) / (s2 s4),  s4 - s2 = -2 rho / (s4 + s2)
    diff = (-2.0 * p.rho) / (s4 + s2) / (s2 * s4)
    return -2.0 * p.rho * p.lam * p.a * diff


def levy_constants(p: ModelParams) -> LevyConstants:
    c1 = levy_moment_1(p)
    return LevyConstants(c1_rho=c1, c2_rho=levy_moment_2(p), beta=0.5 * p.b * p.b,
                         mu=p.alpha - c1)


def assumption_margins(p: ModelParams) -> tuple[tuple[float, float], tuple[float, float]]:
    """Both sides ``(lhs, rhs)`` of the two strict inequalities ``lhs > rhs``."""
    lhs1 = 0.5 * p.b * p.b
    rhs1 = 2.0 * max(-math.expm1(-p.lam * p.T) / p.lam, abs(p.rho))
    denom = math.exp(-p.lam * p.T) * p.sigma0_sq + levy_moment_2(p)
    lhs2 = p.alpha / denom
    return (lhs1, rhs1), (lhs2, -1.0)


def validate(p: ModelParams) -> ValidatedParams:
    """Check the admissibility conditions; raise :class:`AssumptionViolation` if either fails.

    Condition 1 (martingale property of ``Z S``):
        b^2/2 > 2 max((1 - e^{-lambda T}) / lambda, |rho|).
    Condition 2 (positivity of the density process):
        alpha / (e^{-lambda T} sigma0^2 + C2_rho) > -1.
    """
    _check_domain(p)
    (l1, r1), (l2, r2) = assumption_margins(p)
    if not l1 > r1:
        raise AssumptionViolation("CONDITION1_VIOLATED", l1, r1,
                                  "b^2/2 must exceed 2*max((1-e^{-lambda T})/lambda, |rho|)")
    if not l2 > r2:
        raise AssumptionViolation("CONDITION2_VIOLATED", l2, r2,
                                  "alpha/(e^{-lambda T} sigma0^2 + C2_rho) must exceed -1")
    return ValidatedParams(params=p, constants=levy_constants(p), margin1=l1 - r1,
                           margin2=l2 - r2)


def levy_density(x, p: ModelParams):
    """IG-OU Levy density nu(x), vectorised over ``x > 0``."""
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise ParameterError("levy_density requires x > 0")
    b2 = p.b * p.b
    out = p.lam * p.a / (2.0 * SQRT_2PI) * x ** -1.5 * (1.0 + b2 * x) * np.exp(-0.5 * b2 * x)
    return out if out.ndim else float(out)


def k_factor(sigma_sq, p: ModelParams):
    """K = alpha / (sigma^2 + C2_rho)."""
    c2 = levy_moment_2(p)
    s = np.asarray(sigma_sq, dtype=float)
    denom = s + c2
    if np.any(s < 0) or np.any(~(denom > 0)):
        raise ParameterError("k_factor: sigma^2 + C2_rho must be > 0 (degenerate denominator)")
    out = p.alpha / denom
    return out if np.ndim(out) else float(out)


# --------------------------------------------------------------------------
# Jump-correction masses, envelopes and acceptance probabilities
# --------------------------------------------------------------------------

def _check_m(m: int) -> None:
    if m not in (1, 3):
        raise ParameterError(f"m must be 1 or 3, got {m!r}")


def ar_mass(m: int, p: ModelParams, delta: float) -> float:
    """C_m = int_0^inf f_m(y) dy in closed form.

    m = 1: sqrt(pi) lambda delta (beta^{-1/2} - (beta - rho)^{-1/2})
    m = 3: 2 sqrt(pi) lambda delta ((beta - rho)^{1/2} - beta^{1/2})
    Both differences are rewritten so that rho -> 0 loses no precision.
    """
    _check_m(m)
    if not delta > 0:
        raise ParameterError("delta must be > 0")
    beta = 0.5 * p.b * p.b
    sb, sbr = math.sqrt(beta), math.sqrt(beta - p.rho)
    lead = SQRT_PI * p.lam * delta
    if m == 1:
        return lead * (0.0 - p.rho) / (sb * sbr * (sb + sbr))
    return 2.0 * lead * (0.0 - p.rho) / (sb + sbr)


def acceptance_probability(m: int, p: ModelParams, delta: float) -> float:
    """Probability that one Gamma(1/2, 1/beta) proposal is accepted, 1 / int g_m.

    m = 1: lambda delta / (2 (e^{lambda delta/2} - 1)) * (sqrt(beta-rho) - sqrt(beta)) / sqrt(beta-rho)
    m = 3: lambda delta / (|rho| (e^{lambda delta/2} - 1)) * (sqrt(beta (beta-rho)) - beta)
    The m = 3 form is evaluated as lambda delta / (e^{lambda delta/2}-1) * sqrt(beta)/(sqrt(beta)+sqrt(beta-rho)),
    which is algebraically identical and finite at rho = 0.
    """
    _check_m(m)
    if not delta > 0:
        raise ParameterError("delta must be > 0")
    beta = 0.5 * p.b * p.b
    sb, sbr = math.sqrt(beta), math.sqrt(beta - p.rho)
    x = p.lam * delta
    lead = x / math.expm1(0.5 * x)
    if m == 1:
        return 0.5 * lead * (-p.rho) / (sbr * (sbr + sb))
    return lead * sb / (sb + sbr)


def g_tilde(y, p: ModelParams):
    """Gamma(1/2, scale 1/beta) proposal density sqrt(beta/pi) y^{-1/2} e^{-beta y}."""
    y = np.asarray(y, dtype=float)
    if np.any(~(y > 0)):
        raise ParameterError("g_tilde requires y > 0")
    beta = 0.5 * p.b * p.b
    out = math.sqrt(beta / math.pi) * y ** -0.5 * np.exp(-beta * y)
    return out if out.ndim else float(out)


def g_envelope(m: int, y, p: ModelParams, delta: float):
    """Envelope g_m >= f~_m; equals g~ / acceptance_probability(m)."""
    _check_m(m)
    y = np.asarray(y, dtype=float)
    if np.any(~(y > 0)):
        raise ParameterError("g_envelope requires y > 0")
    beta = 0.5 * p.b * p.b
    scale = 1.0 if m == 1 else -p.rho
    cm = ar_mass(m, p, delta)
    if cm == 0.0:
        raise ParameterError("g_envelope undefined for rho = 0 (no jump correction)")
    inv_sqrt_w_m1 = math.expm1(0.5 * p.lam * delta)
    out = 2.0 * scale / cm * y ** -0.5 * np.exp(-beta * y) * inv_sqrt_w_m1
    return out if out.ndim else float(out)


# --------------------------------------------------------------------------
# Compiled A/R ratio f~_m(y) / g_m(y)
# --------------------------------------------------------------------------
#
# With h_1(x) = 1 - e^{rho x} and h_3(x) = (1 - e^{rho x}) / (|rho| x),
#
#   f~_m(y) / g_m(y) = int_1^{1/w} z^{-1/2} h_m(y z) e^{-beta y (z - 1)} dz / (2 (w^{-1/2} - 1)),
#
# which lies in [0, 1] because h_m <= 1. Neither C_m nor y^{-m/2} appears, so
# the ratio is free of overflow as y -> 0.

# 15-point Kronrod nodes/weights with embedded 7-point Gauss rule (QUADPACK qk15).
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

_MAX_INTERVALS = 200


@nb.njit(cache=True, nogil=True)
def _h(m, x, rho):
    # x = y z > 0
    if m == 1:
        return -math.expm1(rho * x)
    t = -rho * x
    if t < SMALL_ARG:
        return 1.0 - 0.5 * t
    return -math.expm1(-t) / t


@nb.njit(cache=True, nogil=True)
def _ratio_integrand(m, y, rho, beta, z):
    return _h(m, y * z, rho) * math.exp(-beta * y * (z - 1.0)) / math.sqrt(z)


@nb.njit(cache=True, nogil=True)
def _gk15(m, y, rho, beta, lo, hi):
    c = 0.5 * (lo + hi)
    h = 0.5 * (hi - lo)
    fc = _ratio_integrand(m, y, rho, beta, c)
    resk = fc * _WGK[7]
    resg = fc * _WG[3]
    for j in range(7):
        x = h * _XGK[j]
        fsum = _ratio_integrand(m, y, rho, beta, c - x) + _ratio_integrand(m, y, rho, beta, c + x)
        resk += _WGK[j] * fsum
        if j % 2 == 1:
            resg += _WG[j // 2] * fsum
    return resk * h, abs((resk - resg) * h)


@nb.njit(cache=True, nogil=True)
def ratio_integral(m, y, rho, beta, inv_w, tol):
    """Adaptive G7-K15 quadrature of the ratio integrand over z in [1, inv_w].

    ``tol`` is an absolute tolerance on the integral; the error budget is
    shared across subintervals in proportion to their length.
    """
    total, err = _gk15(m, y, rho, beta, 1.0, inv_w)
    if err <= tol:
        return total
    width = inv_w - 1.0
    los = np.empty(_MAX_INTERVALS)
    his = np.empty(_MAX_INTERVALS)
    los[0] = 1.0
    his[0] = inv_w
    n = 1
    total = 0.0
    used = 1
    while n > 0:
        n -= 1
        lo = los[n]
        hi = his[n]
        r, e = _gk15(m, y, rho, beta, lo, hi)
        if e <= tol * (hi - lo) / width or used + 2 > _MAX_INTERVALS or n + 2 > _MAX_INTERVALS:
            total += r
        else:
            mid = 0.5 * (lo + hi)
            los[n] = lo
            his[n] = mid
            los[n + 1] = mid
            his[n + 1] = hi
            n += 2
            used += 2
    return total


@nb.njit(cache=True, nogil=True)
def ar_ratio_scalar(m, y, rho, beta, inv_w, inv_sqrt_w_m1):
    """f~_m(y) / g_m(y) for one y > 0, to absolute accuracy ``RATIO_TOL``."""
    norm = 2.0 * inv_sqrt_w_m1
    return ratio_integral(m, y, rho, beta, inv_w, RATIO_TOL * norm) / norm


@nb.njit(cache=True, nogil=True)
def ratio_bounds(m, y, rho, beta, inv_w):
    """Rigorous lower/upper bounds on the ratio from monotonicity of the integrand factors."""
    damp = math.exp(-beta * y * (inv_w - 1.0))
    if m == 1:
        return _h(1, y, rho) * damp, _h(1, y * inv_w, rho)
    return _h(3, y * inv_w, rho) * damp, _h(3, y, rho)


@nb.njit(cache=True)
def _ratio_array(m, y, rho, beta, inv_w, inv_sqrt_w_m1):
    out = np.empty(y.size)
    for i in range(y.size):
        out[i] = ar_ratio_scalar(m, y[i], rho, beta, inv_w, inv_sqrt_w_m1)
    return out


def ar_ratio(m: int, y, p: ModelParams, delta: float):
    """f~_m(y) / g_m(y), vectorised; always in [0, 1]."""
    _check_m(m)
    y = np.asarray(y, dtype=float)
    if np.any(~(y > 0)):
        raise ParameterError("ar_ratio requires y > 0")
    beta = 0.5 * p.b * p.b
    x = p.lam * delta
    out = _ratio_array(m, np.ascontiguousarray(y.ravel()), float(p.rho), beta,
                       math.exp(x), math.expm1(0.5 * x)).reshape(y.shape)
    return out if out.ndim else float(out)


def f_unnormalized(m: int, y, p: ModelParams, delta: float):
    """f_m(y) = int_1^{1/w} (1 - e^{rho y z}) (y z)^{-m/2} e^{-beta y z} dz."""
    _check_m(m)
    y = np.asarray(y, dtype=float)
    beta = 0.5 * p.b * p.b
    scale = 1.0 if m == 1 else -p.rho
    env = 2.0 * scale * y ** -0.5 * np.exp(-beta * y) * math.expm1(0.5 * p.lam * delta)
    out = ar_ratio(m, y, p, delta) * env
    return out if np.ndim(out) else float(out)


def f_tilde(m: int, y, p: ModelParams, delta: float):
    """Normalised jump-correction density f~_m = f_m / C_m (requires rho < 0)."""
    _check_m(m)
    if p.rho == 0:
        raise ParameterError("f_tilde is undefined at rho = 0: the correction vanishes")
    return ar_ratio(m, y, p, delta) * g_envelope(m, y, p, delta)


# --------------------------------------------------------------------------
# Per-(params, delta) derived constants for the compiled kernels
# --------------------------------------------------------------------------

# Index layout of the float64 constants vector passed to kernels.
I_DELTA, I_W, I_SQRT_W, I_INV_W, I_INV_SQRT_W_M1 = 0, 1, 2, 3, 4
I_BETA, I_RHO, I_LAM, I_ALPHA, I_C1, I_C2, I_MU = 5, 6, 7, 8, 9, 10, 11
I_IG_MEAN, I_IG_SHAPE, I_JUMP_RATE, I_COEF1, I_COEF3 = 12, 13, 14, 15, 16
N_CONSTS = 17


@dataclass(frozen=True)
class StepConstants:
    """Everything a one-step sampler needs for a fixed (params, delta)."""

    params: ModelParams
    delta: float
    w: float
    sqrt_w: float
    beta: float
    c1_rho: float
    c2_rho: float
    mu: float
    ig_mean: float
    ig_shape: float
    jump_rate: float
    mass1: float
    mass3: float
    coef1: float  # Poisson rate of N1 per unit K
    coef3: float  # Poisson rate of N3 per unit K
    array: np.ndarray = field(repr=False, compare=False, hash=False)


@lru_cache(maxsize=256)
def step_constants(p: ModelParams, delta: float) -> StepConstants:
    if not delta > 0:
        raise ParameterError("delta must be > 0")
    x = p.lam * delta
    w = math.exp(-x)
    sqrt_w = math.exp(-0.5 * x)
    one_m_sqrt_w = -math.expm1(-0.5 * x)
    beta = 0.5 * p.b * p.b
    lc = levy_constants(p)
    mass1 = ar_mass(1, p, delta)
    mass3 = ar_mass(3, p, delta)
    coef1 = p.a * beta / SQRT_2PI * mass1
    coef3 = p.a / (2.0 * SQRT_2PI) * mass3
    arr = np.zeros(N_CONSTS)
    arr[I_DELTA] = delta
    arr[I_W] = w
    arr[I_SQRT_W] = sqrt_w
    arr[I_INV_W] = math.exp(x)
    arr[I_INV_SQRT_W_M1] = math.expm1(0.5 * x)
    arr[I_BETA] = beta
    arr[I_RHO] = p.rho
    arr[I_LAM] = p.lam
    arr[I_ALPHA] = p.alpha
    arr[I_C1] = lc.c1_rho
    arr[I_C2] = lc.c2_rho
    arr[I_MU] = lc.mu
    arr[I_IG_MEAN] = p.a * one_m_sqrt_w / p.b
    arr[I_IG_SHAPE] = (p.a * one_m_sqrt_w) ** 2
    arr[I_JUMP_RATE] = p.a * p.b * one_m_sqrt_w
    arr[I_COEF1] = coef1
    arr[I_COEF3] = coef3
    arr.setflags(write=False)
    return StepConstants(params=p, delta=delta, w=w, sqrt_w=sqrt_w, beta=beta,
                         c1_rho=lc.c1_rho, c2_rho=lc.c2_rho, mu=lc.mu,
                         ig_mean=arr[I_IG_MEAN], ig_shape=arr[I_IG_SHAPE],
                         jump_rate=arr[I_JUMP_RATE], mass1=mass1, mass3=mass3,
                         coef1=coef1, coef3=coef3, array=arr)
