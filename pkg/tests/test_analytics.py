import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats
from scipy.special import betaln, comb

from escm import analytics as an
from escm import competence as cm
from escm.competence import BetaSpec, PointMass
from escm.errors import DegenerateVariance, DomainError
from escm.mechanism import MechanismParams, WeightMapSpec, weight_table

LINEAR = MechanismParams()
LOGODDS = MechanismParams(weight_map=WeightMapSpec.log_odds(0.1))
UNIT = MechanismParams(weight_map=WeightMapSpec.unit())
ALL_PARAMS = [LINEAR, LOGODDS, MechanismParams(weight_map=WeightMapSpec.power(3))]


def beta_binomial_moments(a, b, table):
    """Closed-form signal moments under Beta(a, b) with no quadrature.

    E_f[P(C=c|p) p^i (1-p)^j] = comb(L, c) B(a+c+i, b+L-c+j) / B(a, b).
    """
    L = len(table) - 1
    c = np.arange(L + 1)

    def m(i, j):
        return comb(L, c) * np.exp(betaln(a + c + i, b + L - c + j) - betaln(a, b))

    t = np.asarray(table)
    mu = t @ (m(1, 0) - m(0, 1))               # E[w (2p - 1)]
    paper = (t * t) @ (4 * m(1, 1))            # E[w^2 (1 - (2p-1)^2)] = E[w^2 4p(1-p)]
    second = (t * t) @ m(0, 0)
    return mu, paper, second - mu * mu


# -- expected_weight_given_p ---------------------------------------------------

def test_expected_weight_endpoints():
    for params in ALL_PARAMS:
        g1 = weight_table(params)[-1]
        assert an.expected_weight_given_p(1.0, params) == pytest.approx((g1, g1 * g1), abs=1e-15)
    assert an.expected_weight_given_p(0.0, LINEAR) == pytest.approx((0.05, 0.0025), abs=1e-15)


def test_expected_weight_finite_sum_oracle():
    params = MechanismParams(q=2, s_min=0.5)
    terms = [(math.comb(10, c) / 2 ** 10, max(0.5, 2 * c - 10) / 10) for c in range(11)]
    e_w = sum(pr * w for pr, w in terms)
    e_w2 = sum(pr * w * w for pr, w in terms)
    assert an.expected_weight_given_p(0.5, params) == pytest.approx((e_w, e_w2), abs=1e-15)


@given(st.floats(0, 1), st.integers(1, 60), st.sampled_from(["linear", "log_odds", "power"]))
def test_expected_weight_matches_scipy_binomial(p, l_a, kind):
    params = MechanismParams(l_a=l_a, s_min=min(0.5, l_a / 2), weight_map=WeightMapSpec(kind, k=2.0))
    t = weight_table(params)
    pmf = stats.binom.pmf(np.arange(l_a + 1), l_a, p)
    e_w, e_w2 = an.expected_weight_given_p(p, params)
    assert e_w == pytest.approx(pmf @ t, abs=1e-12)
    assert e_w2 == pytest.approx(pmf @ (t * t), abs=1e-12)


def test_expected_weight_rejects_outside_unit_interval():
    with pytest.raises(DomainError):
        an.expected_weight_given_p(1.2, LINEAR)


# -- signal_moments ------------------------------------------------------------

def test_point_mass_moments():
    assert an.signal_moments(PointMass(0.5), LOGODDS).mu_T == 0.0
    for p in (0.2, 0.5, 0.77):
        mom = an.signal_moments(PointMass(p), UNIT)
        assert mom.mu_T == pytest.approx(2 * p - 1, abs=1e-14)
        assert mom.sigma_T_sq == pytest.approx(4 * p * (1 - p), abs=1e-14)


@pytest.mark.parametrize("params", ALL_PARAMS)
@pytest.mark.parametrize("a,b", [(2, 2), (5, 3), (13.8, 9.2), (1.5, 7)])
def test_moments_match_beta_binomial_closed_form(params, a, b):
    mu, paper, total = beta_binomial_moments(a, b, weight_table(params))
    m_paper = an.signal_moments(BetaSpec(a, b), params, mode="paper")
    m_total = an.signal_moments(BetaSpec(a, b), params, mode="total_variance")
    assert m_paper.mu_T == pytest.approx(mu, abs=1e-9)
    assert m_paper.sigma_T_sq == pytest.approx(paper, abs=1e-9)
    assert m_total.sigma_T_sq == pytest.approx(total, abs=1e-9)
    assert an.with_mode(m_paper, "total_variance").sigma_T_sq == pytest.approx(total, abs=1e-9)


@pytest.mark.parametrize("dist,params", [
    (BetaSpec(2, 2), LINEAR), (BetaSpec(2, 2), LOGODDS),
    (cm.cmm3_wide(0.3, 0.9), LINEAR), (cm.cmm3_wide(0.1, 0.8), LOGODDS),
])
def test_total_variance_matches_monte_carlo(dist, params):
    rng = np.random.default_rng(2024)
    N = 1_000_000
    p = cm.draw(dist, rng, N)
    w = weight_table(params)[rng.binomial(params.l_a, p)]
    y = np.where(rng.random(N) < p, 1.0, -1.0)
    wy = w * y
    mom = an.signal_moments(dist, params, mode="total_variance")
    assert abs(wy.mean() - mom.mu_T) < 4 * wy.std() / math.sqrt(N)
    # standard error of the sample variance: sqrt((m4 - var^2) / N)
    dev = wy - wy.mean()
    se_var = math.sqrt(((dev ** 4).mean() - wy.var() ** 2) / N)
    assert abs(wy.var() - mom.sigma_T_sq) < 4 * se_var


def test_unknown_mode():
    with pytest.raises(DomainError):
        an.signal_moments(BetaSpec(2, 2), LINEAR, mode="exact")
    with pytest.raises(DomainError):
        an.with_mode(an.signal_moments(BetaSpec(2, 2), LINEAR, mode="total_variance"), "paper")


# -- cjt_success ---------------------------------------------------------------

def test_cjt_examples():
    for n in (1, 3, 11, 501, 10001):
        assert an.cjt_success(n, 0.5).value == pytest.approx(0.5, abs=1e-15)
    assert an.cjt_success(1, 0.7).value == pytest.approx(0.7, abs=1e-15)
    assert an.cjt_success(3, 0.6).value == pytest.approx(3 * 0.36 * 0.4 + 0.216, abs=1e-15)
    assert an.cjt_success(3, 0.6).method == "exact_binomial"


@given(st.integers(0, 300).map(lambda k: 2 * k + 1), st.floats(0, 1))
def test_cjt_matches_binomial_survival(n, mu):
    ref = stats.binom.sf((n - 1) // 2, n, mu)
    assert an.cjt_success(n, mu).value == pytest.approx(ref, abs=1e-13)
    assert an.cjt_failure(n, mu) == pytest.approx(1 - ref, abs=1e-13)


@given(st.integers(0, 500).map(lambda k: 2 * k + 1), st.floats(0, 1))
def test_cjt_antisymmetry(n, mu):
    assert an.cjt_success(n, mu).value + an.cjt_success(n, 1 - mu).value == pytest.approx(1, abs=1e-12)


def test_cjt_rejects_even_n_and_bad_mean():
    for bad in (0, 2, 500, -3, 2.5):
        with pytest.raises(DomainError):
            an.cjt_success(bad, 0.6)
    with pytest.raises(DomainError):
        an.cjt_success(5, 1.1)


# -- escm_success --------------------------------------------------------------

def test_escm_success_examples():
    mk = lambda mu, var: an.SignalMoments(mu, var, "paper")
    assert an.escm_success(501, mk(0.0, 1.0)).value == 0.5
    assert an.escm_success(501, mk(0.1, 1.0)).value == pytest.approx(0.98740, abs=5e-5)
    assert an.escm_success(501, mk(0.1, 1.0)).value == pytest.approx(stats.norm.cdf(math.sqrt(501) * 0.1), abs=1e-14)
    assert an.escm_success(501, mk(-0.1, 1.0)).value == pytest.approx(0.01260, abs=5e-5)
    with pytest.raises(DegenerateVariance):
        an.escm_success(501, mk(0.1, 0.0))


@given(st.floats(0.01, 100), st.floats(0.3, 0.7))
def test_escm_invariant_under_weight_rescaling(c, mu):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        dist = cm.beta_from_mu_sigma(mu, 0.1)
    table = weight_table(LOGODDS)
    for mode in an.VARIANCE_MODES:
        m1 = an.moments_from_table(dist, table, mode)
        m2 = an.moments_from_table(dist, c * table, mode)
        assert m2.snr == pytest.approx(m1.snr, rel=1e-7, abs=1e-9)


@pytest.mark.parametrize("mu", np.linspace(0.4, 0.6, 21))
def test_unit_embedding_tracks_exact_cjt(mu):
    mom = an.signal_moments(PointMass(mu), UNIT, mode="paper")
    if mom.sigma_T_sq == 0:
        return
    assert abs(an.escm_success(501, mom).value - an.cjt_success(501, mu).value) <= 0.03


def test_cjt_depends_only_on_mean():
    # the Beta mean alpha/(alpha+beta) reproduces mu up to rounding only
    for mu in (0.3, 0.48, 0.52, 0.7):
        vals = [an.gain(cm.beta_from_mu_sigma(mu, s), LINEAR, 501).p_cjt.value
                for s in (0.01, 0.1, 0.2, 0.3)]
        assert np.ptp(vals) < 1e-12


def test_unweighted_majority_monte_carlo_matches_exact_tail():
    # marginal votes are Bernoulli(mean) even with heterogeneous p
    rng = np.random.default_rng(5)
    dist, n, T = BetaSpec(5.2, 4.8), 101, 200_000
    p = cm.draw(dist, rng, (T, n))
    wins = ((rng.random((T, n)) < p).sum(axis=1) > n // 2).mean()
    exact = an.cjt_success(n, cm.moments(dist)[0]).value
    assert abs(wins - exact) < 3 * math.sqrt(exact * (1 - exact) / T)


# -- gain ----------------------------------------------------------------------

def test_gain_saturated():
    for params in ALL_PARAMS:
        assert an.gain(PointMass(1.0), params, 501).gain == 0.0


def test_gain_symmetric_beta():
    g = an.gain(BetaSpec(2, 2), LINEAR, 501)
    assert g.p_cjt.value == 0.5
    assert g.gain == pytest.approx(g.p_escm.value - 0.5, abs=1e-15)


def test_gain_positive_near_indifference():
    res = an.gain(cm.beta_from_mu_sigma(0.52, 0.15), LOGODDS, 501)
    assert res.gain > 0
    assert res.mean_competence == pytest.approx(0.52)


@pytest.mark.parametrize("eps", [0.01, 0.05, 0.1, 0.2])
def test_epsilon_sensitivity(eps):
    params = MechanismParams(weight_map=WeightMapSpec.log_odds(eps))
    res = an.gain(cm.beta_from_mu_sigma(0.52, 0.15), params, 501)
    assert np.isfinite(res.gain) and -1 <= res.gain <= 1
    assert res.gain > 0
