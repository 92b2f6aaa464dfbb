import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from bnsmc import igou, mmm, model, oracle
from bnsmc.errors import OracleFailure, ParameterError
from bnsmc.model import paper_params
from bnsmc.sampling import RngStream

from conftest import random_valid_params

DELTA = 0.01
SIG = 0.0041


def test_levy_moments(P):
    assert oracle.oracle_c1(P) == pytest.approx(model.levy_moment_1(P), rel=1e-10)
    assert oracle.oracle_c2(P) == pytest.approx(model.levy_moment_2(P), rel=1e-10)
    assert oracle.oracle_jump_mean_rate(P) == pytest.approx(P.lam * P.a / P.b, rel=1e-10)


def test_levy_integral_of_constant_diverges_safely(P):
    # int nu(dx) is infinite; quadrature on (0, inf) must not silently return a number
    with pytest.raises(OracleFailure):
        oracle.quad_levy_integral(lambda x: 1.0, P)


def test_ar_masses_frozen(P):
    assert oracle.oracle_ar_mass(1, P, DELTA) == pytest.approx(0.00016317445773155495, rel=1e-9)
    assert oracle.oracle_ar_mass(3, P, DELTA) == pytest.approx(0.024174237502284986, rel=1e-9)
    for m in (1, 3):
        assert oracle.oracle_ar_mass(m, P, DELTA) == pytest.approx(model.ar_mass(m, P, DELTA),
                                                                   rel=1e-9)


def test_acceptance_oracle(P):
    for m, ref in ((1, 0.031053), (3, 0.978001)):
        q = oracle.oracle_acceptance(m, P, DELTA)
        assert q == pytest.approx(ref, abs=5e-7)
        assert q == pytest.approx(model.acceptance_probability(m, P, DELTA), rel=1e-9)


def test_laplace_P_frozen(P):
    assert oracle.laplace_sigma2_P(10.0, SIG, DELTA, P) == pytest.approx(0.9591848052229527,
                                                                         rel=1e-10)


def test_laplace_Pstar_frozen():
    p = paper_params(1.0)
    k = float(model.k_factor(SIG, p))
    assert k == pytest.approx(111.49410945183303, rel=1e-13)
    assert oracle.laplace_sigma2_Pstar(10.0, SIG, k, DELTA, p) == pytest.approx(
        0.9490526277931028, rel=1e-10)


def test_laplace_Pstar_structure(P):
    base = oracle.laplace_sigma2_P(5.0, SIG, DELTA, P)
    assert oracle.laplace_sigma2_Pstar(5.0, SIG, 0.0, DELTA, P) == base
    assert oracle.laplace_sigma2_Pstar(5.0, SIG, 3.0, DELTA, P.with_(rho=0.0)) == \
        oracle.laplace_sigma2_P(5.0, SIG, DELTA, P.with_(rho=0.0))
    # extra positive jumps under P* make the transform smaller
    prev = base
    for k in (10.0, 100.0, 1000.0):
        cur = oracle.laplace_sigma2_Pstar(5.0, SIG, k, DELTA, P)
        assert cur < prev
        prev = cur


def test_pstar_exponent_two_forms_agree():
    p = paper_params(1.0)
    k = float(model.k_factor(SIG, p))
    for v in (0.5, 5.0, 50.0):
        a = oracle.pstar_correction_exponent(v, k, DELTA, p)
        b = oracle.pstar_correction_exponent_levy(v, k, DELTA, p)
        assert a == pytest.approx(b, rel=1e-9)
        assert a > 0  # enters the transform as exp(-a)


@pytest.mark.parametrize("alpha", [1.0, 10.0])
def test_pstar_sampler_matches_transform(alpha):
    p = paper_params(alpha)
    k = float(model.k_factor(SIG, p))
    x = mmm.sample_steps_Pstar(SIG, k, DELTA, p, RngStream(6, 0), 200_000)
    for v in (1.0, 10.0, 100.0, 1000.0):
        e = np.exp(-v * x)
        ref = oracle.laplace_sigma2_Pstar(v, SIG, k, DELTA, p)
        assert abs(e.mean() - ref) <= 3.5 * e.std(ddof=1) / math.sqrt(e.size)


def test_cdf_limits_and_monotone(P):
    for m in (1, 3):
        assert oracle.cdf_f_tilde(m, 0.0, P, DELTA) == 0.0
        assert oracle.cdf_f_tilde(m, math.inf, P, DELTA) == 1.0
        ys = np.logspace(-8, 0, 40)
        c = oracle.cdf_f_tilde(m, ys, P, DELTA)
        assert np.all(np.diff(c) >= -1e-13)
        assert c[-1] == pytest.approx(1.0, abs=1e-10)


def test_cdf_derivative_is_density(P):
    for m in (1, 3):
        for y in (1e-4, 3e-3, 2e-2):
            h = 1e-4 * y
            d = (oracle.cdf_f_tilde(m, y + h, P, DELTA) - oracle.cdf_f_tilde(m, y - h, P, DELTA)) / (2 * h)
            assert d == pytest.approx(model.f_tilde(m, y, P, DELTA), rel=1e-5)


def test_cdf_matches_direct_quadrature(P):
    for m in (1, 3):
        y = 0.01
        direct = integrate.quad(lambda t: model.f_tilde(m, t, P, DELTA), 0, y,
                                epsabs=1e-13, epsrel=1e-11, limit=400)[0]
        assert oracle.cdf_f_tilde(m, y, P, DELTA) == pytest.approx(direct, rel=1e-8)


def test_medians_frozen(P):
    assert oracle.median_f_tilde(1, P, DELTA) == pytest.approx(0.01577378944788253, rel=1e-9)
    assert oracle.median_f_tilde(3, P, DELTA) == pytest.approx(0.0030320380430747754, rel=1e-9)


def test_jump_sampler_median(P):
    for m in (1, 3):
        med = oracle.median_f_tilde(m, P, DELTA)
        y, used = mmm.sample_jumps(m, P, DELTA, RngStream(7, m), 100_000)
        assert used >= y.size
        frac = (y <= med).mean()
        assert abs(frac - 0.5) <= 4 * 0.5 / math.sqrt(y.size)


def test_cdf_domain(P):
    with pytest.raises(ParameterError):
        oracle.cdf_f_tilde(2, 0.1, P, DELTA)
    with pytest.raises(ParameterError):
        oracle.cdf_f_tilde(1, -0.1, P, DELTA)
    with pytest.raises(ParameterError):
        oracle.cdf_f_tilde(1, 0.1, P.with_(rho=0.0), DELTA)


def test_truncation_bound_negligible(P):
    for m in (1, 3):
        y_star, bound = oracle._truncation(m, P, DELTA)
        assert bound(y_star) <= 1e-16 * oracle.oracle_ar_mass(m, P, DELTA)
        assert bound(2 * y_star) < bound(y_star)


def test_quadrature_spec():
    assert oracle.DEFAULT_SPEC.inner().abs_tol == pytest.approx(1e-13)
    with pytest.raises(ParameterError):
        oracle.QuadratureSpec(abs_tol=0.0)
    with pytest.raises(ParameterError):
        oracle.QuadratureSpec(max_subdivisions=0)


def test_failure_surfaces(P):
    tight = oracle.QuadratureSpec(abs_tol=1e-30, rel_tol=1e-15, max_subdivisions=1)
    with pytest.raises(OracleFailure):
        oracle.oracle_ar_mass(1, P, DELTA, tight)


def test_run_checks_all_pass(P):
    res = oracle.run_checks(P)
    names = [r.quantity for r in res]
    assert "ar_mass_1" in names and "acceptance_probability_3" in names
    assert all(r.passed for r in res), [(r.quantity, r.rel_err) for r in res if not r.passed]


def test_run_checks_detects_perturbation(P):
    res = {r.quantity: r for r in oracle.run_checks(P, perturb={"ar_mass_3": 1e-6})}
    assert not res["ar_mass_3"].passed
    assert res["ar_mass_3"].rel_err == pytest.approx(1e-6, rel=1e-2)
    assert all(r.passed for q, r in res.items() if q != "ar_mass_3")


def test_run_checks_without_leverage(P):
    res = oracle.run_checks(P.with_(rho=0.0))
    names = {r.quantity for r in res}
    assert not any(n.startswith("acceptance") or n.startswith("pstar") for n in names)
    for r in res:
        assert r.passed
        if r.quantity in ("levy_moment_1", "levy_moment_2", "ar_mass_1", "ar_mass_3"):
            assert r.closed_form == 0.0 and r.oracle == 0.0


def test_rel_agree():
    assert oracle.rel_agree(1.0, 1.0, 0.0)
    assert oracle.rel_agree(1.0, 1.0 + 1e-9, 1e-8)
    assert not oracle.rel_agree(1.0, 1.0 + 1e-7, 1e-8)
    assert not oracle.rel_agree(0.0, 1e-300, 1e-8)


@settings(max_examples=8, deadline=None, derandomize=True)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_closed_forms_agree_on_random_params(seed):
    p = random_valid_params(np.random.default_rng(seed))
    delta = p.T / 100
    assert oracle.oracle_c1(p) == pytest.approx(model.levy_moment_1(p), rel=1e-8)
    assert oracle.oracle_c2(p) == pytest.approx(model.levy_moment_2(p), rel=1e-8)
    for m in (1, 3):
        assert oracle.oracle_ar_mass(m, p, delta) == pytest.approx(model.ar_mass(m, p, delta),
                                                                   rel=1e-8)
    v = 1.0 / p.sigma0_sq
    assert oracle.laplace_sigma2_P(v, p.sigma0_sq, delta, p) == pytest.approx(
        igou.transition_laplace_exact(v, p.sigma0_sq, delta, p), rel=1e-8)
