import math

import numpy as np
import pytest

from bnsmc import igou, model, oracle
from bnsmc.errors import ParameterError
from bnsmc.sampling import RngStream

from conftest import ACCEPTANCE_SEED

DELTA = 0.01
SIG = 0.0041


def test_step_structure(P):
    s = RngStream(1, 0)
    w = math.exp(-P.lam * DELTA)
    seen_jump = seen_none = False
    for _ in range(3000):
        st = igou.step_sigma2_P_detail(SIG, DELTA, P, s)
        assert st.w == pytest.approx(w, rel=1e-15)
        assert st.x1 > 0 and st.x2 >= 0
        assert st.result == w * SIG + st.x1 + st.x2
        assert st.result >= w * SIG
        if st.n_jumps == 0:
            assert st.x2 == 0.0
            seen_none = True
        else:
            assert st.x2 > 0
            seen_jump = True
    assert seen_jump and seen_none


def test_step_positive_floor_over_chain(P):
    chain = igou.simulate_variance_chain(SIG, DELTA, P, RngStream(1, 0), 50_000)
    prev = np.concatenate([[SIG], chain[:-1]])
    assert np.all(chain >= math.exp(-P.lam * DELTA) * prev)
    assert np.all(np.isfinite(chain)) and chain.min() > 0


def test_conditional_mean(P):
    x = igou.sample_steps_P(SIG, DELTA, P, RngStream(1, 0), 1_000_000)
    w = math.exp(-P.lam * DELTA)
    expected = w * SIG + (1 - w) * P.a / P.b
    assert expected == pytest.approx(0.0041783, abs=1e-7)
    assert abs(x.mean() - expected) <= 3 * x.std() / math.sqrt(x.size)


def test_closed_form_transition_matches_oracle(P):
    for v in (1.0, 5.0, 10.0, 100.0):
        for d in (0.001, 0.01, 0.5):
            assert igou.transition_laplace_exact(v, SIG, d, P) == pytest.approx(
                oracle.laplace_sigma2_P(v, SIG, d, P), rel=1e-10)


@pytest.mark.parametrize("delta", [0.01, 0.4, 2.0])
def test_laplace_exact_in_law(P, delta):
    # large delta makes the jump-size mixing law matter; the sampler must stay exact
    x = igou.sample_steps_P(SIG, delta, P, RngStream(4, 0), 200_000)
    for v in (1.0, 10.0, 100.0):
        e = np.exp(-v * x)
        ref = igou.transition_laplace_exact(v, SIG, delta, P)
        assert abs(e.mean() - ref) <= 3.5 * e.std(ddof=1) / math.sqrt(e.size)


def test_jump_mixing_range():
    # sqrt(V) is uniform on [1, w^{-1/2}], so V lies in [1, 1/w] which sits inside
    # [1, (2/sqrt(w) - 1)^2]: (2/s - 1)^2 - 1/s^2 = 2 (1/s - 1)^2 >= 0 with s = sqrt(w)
    for w in np.linspace(1e-6, 1 - 1e-12, 1001):
        s = math.sqrt(w)
        assert 1 / w <= (2 / s - 1) ** 2 * (1 + 1e-15)


def test_stationary_mean_value(P):
    assert igou.stationary_mean(P) == pytest.approx(0.007279, abs=1e-6)


def test_ergodic_mean_T400(P):
    # T = 400, M = 40,000. The time average of this path has a standard deviation
    # of about 4.3% of a/b, so the 5% band is a weak check.
    chain = igou.simulate_variance_chain(SIG, DELTA, P, RngStream(ACCEPTANCE_SEED, 1), 40_000)
    assert chain.mean() / igou.stationary_mean(P) == pytest.approx(1, abs=0.05)


def test_ergodic_mean_long(P):
    chain = igou.simulate_variance_chain(SIG, DELTA, P, RngStream(ACCEPTANCE_SEED, 2), 4_000_000)
    assert chain.mean() / igou.stationary_mean(P) == pytest.approx(1, abs=0.01)


def test_delta_per_call(P):
    # the same stream state can be driven with different step sizes
    s = RngStream(1, 0)
    a = igou.step_sigma2_P(SIG, 0.01, P, s)
    b = igou.step_sigma2_P(a, 0.02, P, s)
    assert b >= math.exp(-P.lam * 0.02) * a > 0


def test_bad_inputs(P):
    with pytest.raises(ParameterError):
        igou.step_sigma2_P(0.0, DELTA, P, RngStream(1, 0))
    with pytest.raises(ParameterError):
        igou.step_sigma2_P(SIG, 0.0, P, RngStream(1, 0))


def test_constants_vector_layout(P):
    sc = model.step_constants(P, DELTA)
    w = math.exp(-P.lam * DELTA)
    assert sc.array[model.I_W] == pytest.approx(w, rel=1e-15)
    assert sc.array[model.I_INV_SQRT_W_M1] == pytest.approx(1 / math.sqrt(w) - 1, rel=1e-12)
    assert sc.array[model.I_IG_MEAN] == pytest.approx(P.a * (1 - math.sqrt(w)) / P.b, rel=1e-12)
    assert sc.array[model.I_IG_SHAPE] == pytest.approx((P.a * (1 - math.sqrt(w))) ** 2, rel=1e-12)
    assert sc.array[model.I_JUMP_RATE] == pytest.approx(P.a * P.b * (1 - math.sqrt(w)), rel=1e-12)
