"""Independent quadrature truth source.

Nothing here reuses the closed forms of :mod:`bnsmc.model`; every quantity is
rebuilt from the Levy density (or from the definition of f_m) with
``scipy.integrate``. The closed forms are then checked against these values.

Conventions
-----------
* Integrals against nu use x = t^2, which turns the x^{-3/2} singularity into a
  bounded integrand whenever the integrand vanishes linearly at 0.
* Nested integrals give the inner quadrature a tolerance ten times tighter than
  the outer one, so the inner error stays below the outer budget.
* Integrals of f_m over (0, inf) are truncated at y* where the certified bound
  scale (1/w - 1) sqrt(pi/beta) erfc(sqrt(beta y*)) on the dropped tail is below
  1e-16 of the retained value (f_m(y) <= scale y^{-1/2} e^{-beta y} (1/w - 1)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
from scipy import integrate, optimize, special

from .errors import OracleFailure, ParameterError
from .model import ModelParams, paper_params

SQRT_2PI = math.sqrt(2.0 * math.pi)
TAIL_REL = 1e-16


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    max_subdivisions: int = 500

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0 and self.max_subdivisions >= 1):
            raise ParameterError("quadrature tolerances must be positive")

    def inner(self) -> "QuadratureSpec":
        return QuadratureSpec(self.abs_tol / 10, self.rel_tol / 10, self.max_subdivisions)


DEFAULT_SPEC = QuadratureSpec()


def _quad(f: Callable[[float], float], lo: float, hi: float, spec: QuadratureSpec,
          what: str) -> float:
    val, err, info, *msg = integrate.quad(f, lo, hi, epsabs=spec.abs_tol, epsrel=spec.rel_tol,
                                          limit=spec.max_subdivisions, full_output=1)
    if msg:
        # QUADPACK flags trouble; accept only roundoff warnings whose error
        # estimate still meets the requested tolerance.
        if not (err <= max(spec.abs_tol, spec.rel_tol * abs(val)) * 10 and "roundoff" in msg[0]):
            raise OracleFailure(f"{what}: {msg[0].strip()} (value {val!r}, error {err!r})")
    if not math.isfinite(val):
        raise OracleFailure(f"{what}: non-finite result")
    return val


def _nu(x: float, p: ModelParams) -> float:
    b2 = p.b * p.b
    return p.lam * p.a / (2.0 * SQRT_2PI) * x ** -1.5 * (1.0 + b2 * x) * math.exp(-0.5 * b2 * x)


def quad_levy_integral(integrand: Callable[[float], float], params: ModelParams,
                       spec: QuadratureSpec = DEFAULT_SPEC, scale: float | None = None) -> float:
    """int_0^inf integrand(x) nu(dx) by adaptive quadrature in t = sqrt(x).

    ``scale`` adds a breakpoint at x = 1/scale for integrands with their own
    length scale (such as 1 - e^{-u x}).
    """
    p = params

    def g(t):
        if t == 0.0:
            return 0.0
        x = t * t
        return integrand(x) * _nu(x, p) * 2.0 * t

    beta = 0.5 * p.b * p.b
    cuts = sorted({math.sqrt(1.0 / beta)} | ({math.sqrt(1.0 / scale)} if scale else set()))
    total = 0.0
    lo = 0.0
    for c in cuts:
        total += _quad(g, lo, c, spec, "levy integral")
        lo = c
    total += _quad(g, lo, math.inf, spec, "levy integral tail")
    return total


# --------------------------------------------------------------------------
# Levy moments
# --------------------------------------------------------------------------

def oracle_c1(p: ModelParams, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """int (e^{rho x} - 1) nu(dx)."""
    return quad_levy_integral(lambda x: math.expm1(p.rho * x), p, spec)


def oracle_c2(p: ModelParams, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """int (e^{rho x} - 1)^2 nu(dx)."""
    return quad_levy_integral(lambda x: math.expm1(p.rho * x) ** 2, p, spec)


def oracle_jump_mean_rate(p: ModelParams, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """int x nu(dx); equals lambda a / b."""
    return quad_levy_integral(lambda x: x, p, spec)


# --------------------------------------------------------------------------
# f_m integrals
# --------------------------------------------------------------------------

def _f_scale(m: int, p: ModelParams) -> float:
    return 1.0 if m == 1 else -p.rho


def _truncation(m: int, p: ModelParams, delta: float) -> tuple[float, Callable[[float], float]]:
    beta = 0.5 * p.b * p.b
    bound_coef = _f_scale(m, p) * math.expm1(p.lam * delta) * math.sqrt(math.pi / beta)
    y_star = special.erfcinv(1e-22) ** 2 / beta
    return y_star, lambda y: bound_coef * math.erfc(math.sqrt(beta * y))


def _f_integral(m: int, weight: Callable[[float], float], p: ModelParams, delta: float,
                spec: QuadratureSpec) -> float:
    """int_0^inf weight(y) f_m(y) dy as a nested quadrature (y = s^2 outside, z inside).

    ``weight`` must be bounded on (0, inf).
    """
    if m not in (1, 3):
        raise ParameterError("m must be 1 or 3")
    if not delta > 0:
        raise ParameterError("delta must be > 0")
    if p.rho == 0:
        return 0.0
    beta = 0.5 * p.b * p.b
    rho = p.rho
    inv_w = math.exp(p.lam * delta)
    half_m = 0.5 * m
    ispec = spec.inner()

    def inner(s):
        y = s * s
        if y == 0.0:
            if m == 1:
                return 0.0
            # (1 - e^{rho y z}) (y z)^{-3/2} 2 s -> 2 |rho| z^{-1/2}
            return weight(0.0) * 2.0 * (-rho) * 2.0 * (math.sqrt(inv_w) - 1.0)

        def h(z):
            x = y * z
            return -math.expm1(rho * x) * x ** -half_m * math.exp(-beta * x)

        return weight(y) * 2.0 * s * _quad(h, 1.0, inv_w, ispec, f"f_{m} inner")

    y_star, tail = _truncation(m, p, delta)
    split = math.sqrt(1.0 / beta)
    head = (_quad(inner, 0.0, split, spec, f"f_{m} outer")
            + _quad(inner, split, math.sqrt(y_star), spec, f"f_{m} outer"))
    if tail(y_star) > TAIL_REL * abs(head):
        raise OracleFailure(f"f_{m} truncation bound {tail(y_star):.3g} too large")
    return head


def oracle_ar_mass(m: int, p: ModelParams, delta: float,
                   spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """C_m = int_0^inf f_m(y) dy by 2-D quadrature."""
    return _f_integral(m, lambda y: 1.0, p, delta, spec)


def oracle_acceptance(m: int, p: ModelParams, delta: float,
                      spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """1 / int g_m with g_m = (2 scale / C_m) y^{-1/2} e^{-beta y} (w^{-1/2} - 1).

    C_m comes from :func:`oracle_ar_mass`, the remaining integral by quadrature.
    """
    if p.rho == 0:
        raise OracleFailure("g_m is undefined at rho = 0")
    cm = oracle_ar_mass(m, p, delta, spec)
    beta = 0.5 * p.b * p.b
    # int y^{-1/2} e^{-beta y} dy with y = s^2
    gam = _quad(lambda s: 2.0 * math.exp(-beta * s * s), 0.0, math.inf, spec, "gamma integral")
    total = 2.0 * _f_scale(m, p) / cm * math.expm1(0.5 * p.lam * delta) * gam
    return 1.0 / total


# --------------------------------------------------------------------------
# Conditional Laplace transforms of the variance step
# --------------------------------------------------------------------------

def _check_v(v: float, sigma_sq_prev: float, delta: float) -> None:
    if not v > 0:
        raise ParameterError("v must be > 0")
    if not sigma_sq_prev > 0:
        raise ParameterError("sigma_sq_prev must be > 0")
    if not delta > 0:
        raise ParameterError("delta must be > 0")


def laplace_sigma2_P(v: float, sigma_sq_prev: float, delta: float, params: ModelParams,
                     spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """E[exp(-v sigma^2_{t+delta}) | sigma^2_t] under P.

    exp(-v w sigma^2) exp(-(1/lambda) int_{v w}^{v} (1/u) int (1 - e^{-u x}) nu(dx) du),
    with both integrals done numerically.
    """
    _check_v(v, sigma_sq_prev, delta)
    p = params
    w = math.exp(-p.lam * delta)
    ispec = spec.inner()

    def psi_over_u(u):
        return quad_levy_integral(lambda x: -math.expm1(-u * x), p, ispec, scale=u) / u

    outer = _quad(psi_over_u, v * w, v, spec, "laplace P outer")
    return math.exp(-v * w * sigma_sq_prev - outer / p.lam)


def pstar_correction_exponent(v: float, k: float, delta: float, params: ModelParams,
                              spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """K (a beta / sqrt(2 pi)) int (1 - e^{-v y}) f_1 + K (a / (2 sqrt(2 pi))) int (1 - e^{-v y}) f_3."""
    p = params
    beta = 0.5 * p.b * p.b
    wt = lambda y: -math.expm1(-v * y)  # noqa: E731
    e1 = _f_integral(1, wt, p, delta, spec)
    e3 = _f_integral(3, wt, p, delta, spec)
    return k * (p.a * beta / SQRT_2PI * e1 + p.a / (2.0 * SQRT_2PI) * e3)


def pstar_correction_exponent_levy(v: float, k: float, delta: float, params: ModelParams,
                                   spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """The same exponent from the tilted Levy measure:

    K int_0^delta int (1 - e^{-v e^{-lambda r} x}) (1 - e^{rho x}) nu(dx) dr.
    """
    p = params
    ispec = spec.inner()

    def over_r(r):
        u = v * math.exp(-p.lam * r)
        return quad_levy_integral(lambda x: math.expm1(-u * x) * math.expm1(p.rho * x),
                                  p, ispec, scale=u)

    return k * _quad(over_r, 0.0, delta, spec, "laplace P* (levy form)")


def laplace_sigma2_Pstar(v: float, sigma_sq_prev: float, k: float, delta: float,
                         params: ModelParams, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """E*[exp(-v sigma^2_{t+delta}) | sigma^2_t] with K frozen at ``k``."""
    _check_v(v, sigma_sq_prev, delta)
    if not k >= 0:
        raise ParameterError("k must be >= 0")
    base = laplace_sigma2_P(v, sigma_sq_prev, delta, params, spec)
    if k == 0 or params.rho == 0:
        return base
    return base * math.exp(-pstar_correction_exponent(v, k, delta, params, spec))


# --------------------------------------------------------------------------
# CDF of f~_m
# --------------------------------------------------------------------------

def _inner_cdf(m: int, X, beta: float, rho: float):
    """int_0^X (1 - e^{rho x}) x^{-m/2} e^{-beta x} dx, vectorised over X >= 0.

    m = 1 uses the regularized lower incomplete gamma function; m = 3 is
    integrated by parts first so both pieces stay finite at 0.
    """
    X = np.asarray(X, dtype=float)
    b1 = beta - rho
    if m == 1:
        return math.sqrt(math.pi) * (special.gammainc(0.5, beta * X) / math.sqrt(beta)
                                     - special.gammainc(0.5, b1 * X) / math.sqrt(b1))
    with np.errstate(divide="ignore", invalid="ignore"):
        boundary = np.where(X > 0, 2.0 * X ** -0.5 * np.exp(-beta * X) * np.expm1(rho * X), 0.0)
    return boundary + 2.0 * math.sqrt(math.pi) * (math.sqrt(b1) * special.gammainc(0.5, b1 * X)
                                                  - math.sqrt(beta) * special.gammainc(0.5, beta * X))


def _inner_cdf_limit(m: int, beta: float, rho: float) -> float:
    b1 = beta - rho
    if m == 1:
        return math.sqrt(math.pi) * (1.0 / math.sqrt(beta) - 1.0 / math.sqrt(b1))
    return 2.0 * math.sqrt(math.pi) * (math.sqrt(b1) - math.sqrt(beta))


def _cdf_unnormalized(m: int, y: np.ndarray, p: ModelParams, delta: float,
                      spec: QuadratureSpec) -> np.ndarray:
    # int_0^y f_m = int_1^{1/w} (1/z) int_0^{y z} (1 - e^{rho x}) x^{-m/2} e^{-beta x} dx dz
    beta = 0.5 * p.b * p.b
    inv_w = math.exp(p.lam * delta)
    val, err = integrate.quad_vec(lambda z: _inner_cdf(m, y * z, beta, p.rho) / z, 1.0, inv_w,
                                  epsabs=spec.abs_tol, epsrel=spec.rel_tol,
                                  limit=spec.max_subdivisions)
    if not np.all(np.isfinite(val)):
        raise OracleFailure(f"cdf_f_tilde(m={m}) non-finite")
    return np.atleast_1d(val)


def cdf_f_tilde(m: int, y, params: ModelParams, delta: float,
                spec: QuadratureSpec = DEFAULT_SPEC):
    """P(X <= y) for X ~ f~_m, vectorised over ``y >= 0`` (inf allowed)."""
    if m not in (1, 3):
        raise ParameterError("m must be 1 or 3")
    if params.rho == 0:
        raise ParameterError("f~_m is undefined at rho = 0")
    y = np.asarray(y, dtype=float)
    if np.any(y < 0) or np.any(np.isnan(y)):
        raise ParameterError("cdf_f_tilde requires y >= 0")
    flat = y.ravel()
    beta = 0.5 * params.b * params.b
    total = _inner_cdf_limit(m, beta, params.rho) * params.lam * delta
    out = np.ones_like(flat)
    fin = np.isfinite(flat)
    if fin.any():
        out[fin] = _cdf_unnormalized(m, flat[fin], params, delta, spec) / total
    out = np.clip(out, 0.0, 1.0).reshape(y.shape)
    return out if out.ndim else float(out)


def median_f_tilde(m: int, params: ModelParams, delta: float,
                   spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    beta = 0.5 * params.b * params.b
    f = lambda y: cdf_f_tilde(m, y, params, delta, spec) - 0.5  # noqa: E731
    hi = 1.0 / beta
    while f(hi) < 0:
        hi *= 2.0
    return optimize.brentq(f, 0.0, hi, xtol=1e-15, rtol=1e-12)


# --------------------------------------------------------------------------
# Check table for the CLI
# --------------------------------------------------------------------------

@dataclass
class CheckResult:
    quantity: str
    closed_form: float
    oracle: float
    tolerance: float
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = rel_agree(self.closed_form, self.oracle, self.tolerance)

    @property
    def rel_err(self) -> float:
        if self.closed_form == self.oracle:
            return 0.0
        return abs(self.closed_form - self.oracle) / max(abs(self.oracle), abs(self.closed_form))


def rel_agree(a: float, b: float, tol: float) -> bool:
    if a == b:
        return True
    return abs(a - b) <= tol * max(abs(a), abs(b))


def run_checks(params: ModelParams | None = None, delta: float = 0.01,
               perturb: dict[str, float] | None = None, tol: float = 1e-8,
               laplace_v: Iterable[float] = (1.0, 5.0, 10.0),
               spec: QuadratureSpec = DEFAULT_SPEC) -> list[CheckResult]:
    """Compare every closed form against the oracle.

    ``perturb`` maps a quantity name to a relative perturbation applied to its
    closed-form value before comparison (fault injection for self-tests).
    """
    from . import igou, model

    p = params if params is not None else paper_params()
    bump = perturb or {}

    def closed(name, value):
        return value * (1.0 + bump.get(name, 0.0))

    out = [
        CheckResult("levy_moment_1", closed("levy_moment_1", model.levy_moment_1(p)),
                    oracle_c1(p, spec), tol),
        CheckResult("levy_moment_2", closed("levy_moment_2", model.levy_moment_2(p)),
                    oracle_c2(p, spec), tol),
        CheckResult("jump_mean_rate", closed("jump_mean_rate", p.lam * p.a / p.b),
                    oracle_jump_mean_rate(p, spec), tol),
    ]
    for m in (1, 3):
        name = f"ar_mass_{m}"
        out.append(CheckResult(name, closed(name, model.ar_mass(m, p, delta)),
                               oracle_ar_mass(m, p, delta, spec), tol))
    if p.rho != 0:
        for m in (1, 3):
            name = f"acceptance_probability_{m}"
            out.append(CheckResult(name, closed(name, model.acceptance_probability(m, p, delta)),
                                   oracle_acceptance(m, p, delta, spec), tol))
    sig = p.sigma0_sq
    for v in laplace_v:
        name = f"laplace_P(v={v:g})"
        out.append(CheckResult(name, closed(name, igou.transition_laplace_exact(v, sig, delta, p)),
                               laplace_sigma2_P(v, sig, delta, p, spec), tol))
    if p.rho != 0 and p.alpha > 0:
        k = float(model.k_factor(sig, p))
        for v in laplace_v:
            name = f"pstar_exponent(v={v:g})"
            out.append(CheckResult(name, closed(name, pstar_correction_exponent(v, k, delta, p, spec)),
                                   pstar_correction_exponent_levy(v, k, delta, p, spec), tol))
    return out
