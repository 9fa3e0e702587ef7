import math

import numpy as np
import pytest

from escm import analytics as an
from escm import competence as cm
from escm.competence import BetaSpec, PointMass
from escm.errors import DomainError, TooLargeForExhaustive
from escm.mechanism import MechanismParams, WeightMapSpec
from escm.montecarlo import (
    BLOCK,
    TrialConfig,
    exact_success,
    np_convergence,
    optimality_check,
    simulate,
    validate_clt,
    vote_profiles,
)

LINEAR = MechanismParams()
LOGODDS = MechanismParams(weight_map=WeightMapSpec.log_odds(0.1))
UNIT = MechanismParams(weight_map=WeightMapSpec.unit())


def test_config_validation():
    with pytest.raises(DomainError):
        TrialConfig(BetaSpec(2, 2), LINEAR, 0, 10, 1)
    with pytest.raises(DomainError):
        TrialConfig(BetaSpec(2, 2), LINEAR, 5, 0, 1)
    with pytest.raises(DomainError):
        TrialConfig(BetaSpec(2, 2), LINEAR, 5, 10, 1, rule="borda")


def test_perfect_voters():
    for n in (1, 4, 51):
        rep = simulate(TrialConfig(PointMass(1.0), LINEAR, n, 1000, 0, rule="cjt_majority"))
        assert rep.success_rate == 1.0 and rep.standard_error == 0.0


def test_coin_flippers():
    rep = simulate(TrialConfig(PointMass(0.5), LINEAR, 501, 100_000, 3, rule="cjt_majority"))
    assert abs(rep.success_rate - 0.5) <= 0.005
    assert rep.clt_prediction == 0.5


def test_standard_error_formula():
    rep = simulate(TrialConfig(BetaSpec(5, 4), LINEAR, 21, 3000, 1))
    p = rep.success_rate
    assert rep.standard_error == pytest.approx(math.sqrt(p * (1 - p) / 3000), rel=1e-12)


def test_beta22_logodds_against_clt():
    rep = simulate(TrialConfig(BetaSpec(2, 2), LOGODDS, 501, 100_000, 5))
    assert abs(rep.success_rate - rep.clt_prediction) <= 0.02


def test_determinism_and_thread_independence():
    cfg = TrialConfig(BetaSpec(3, 2), LOGODDS, 31, 3 * BLOCK + 17, 9)
    a, b, c = simulate(cfg), simulate(cfg), simulate(cfg, threads=3)
    assert a == b == c
    other = simulate(TrialConfig(BetaSpec(3, 2), LOGODDS, 31, 3 * BLOCK + 17, 10))
    assert other.seeds_hash != a.seeds_hash


@pytest.mark.parametrize("rule", ["nitzan_paroush_oracle", "likelihood_oracle"])
def test_oracle_rules_beat_majority(rule):
    dist = BetaSpec(4, 2)
    maj = simulate(TrialConfig(dist, LINEAR, 15, 40_000, 2, rule="cjt_majority"))
    orc = simulate(TrialConfig(dist, LINEAR, 15, 40_000, 2, rule=rule))
    assert orc.success_rate > maj.success_rate


def test_multi_option_ties_count_one_over_m():
    rep = simulate(TrialConfig(PointMass(0.0), UNIT, 2, 20_000, 4, rule="cjt_majority",
                               num_alternatives=3))
    # two voters, always wrong, disagreeing half the time: no success ever
    assert rep.success_rate == 0.0
    rep = simulate(TrialConfig(PointMass(0.5), UNIT, 2, 20_000, 4, rule="cjt_majority"))
    # one correct vote and one wrong with prob 1/2 -> tie resolved 1/2; both right 1/4
    assert abs(rep.success_rate - 0.5) < 4 * rep.standard_error


def test_majority_estimate_within_four_se_across_meta_runs():
    dist, n = BetaSpec(5.5, 4.5), 51
    exact = an.cjt_success(n, cm.moments(dist)[0]).value
    hits = 0
    for seed in range(100):
        rep = simulate(TrialConfig(dist, LINEAR, n, 2000, seed, rule="cjt_majority"))
        hits += abs(rep.success_rate - exact) <= 4 * max(rep.standard_error, 1e-12)
    assert hits >= 99
    assert rep.clt_prediction == pytest.approx(exact)


def test_pipeline_matches_fast_path():
    dist = BetaSpec(2.2, 2)
    fast = simulate(TrialConfig(dist, LINEAR, 41, 20_000, 6))
    pipe = simulate(TrialConfig(dist, LINEAR, 41, 4000, 6, pipeline=True))
    se = math.hypot(fast.standard_error, pipe.standard_error)
    assert abs(fast.success_rate - pipe.success_rate) <= 3 * se


def test_pipeline_n501_beta22_logodds_against_clt():
    rep = simulate(TrialConfig(BetaSpec(2, 2), LOGODDS, 501, 500, 2, pipeline=True))
    assert abs(rep.success_rate - rep.clt_prediction) <= 0.02


# -- validate_clt ------------------------------------------------------------

def test_validate_needs_enough_trials():
    with pytest.raises(DomainError):
        validate_clt(BetaSpec(2, 2), LINEAR, 501, 9_999, 1)


def test_validate_unit_embedding_matches_exact_binomial():
    dist = cm.beta_from_mu_sigma(0.52, 0.1)
    rep = validate_clt(dist, UNIT, 501, 100_000, 3)
    assert abs(rep.monte_carlo - rep.exact_binomial) <= 3 * rep.standard_error


def test_validate_reports_both_modes():
    rep = validate_clt(BetaSpec(2, 2), LINEAR, 501, 20_000, 4)
    assert rep.better_mode in an.VARIANCE_MODES
    assert rep.paper_gap == pytest.approx(abs(rep.monte_carlo - rep.paper_prediction))
    assert rep.total_variance_gap == pytest.approx(abs(rep.monte_carlo - rep.total_variance_prediction))


def test_validate_saturated():
    rep = validate_clt(PointMass(1.0), LOGODDS, 101, 10_000, 0)
    for v in (rep.monte_carlo, rep.paper_prediction, rep.total_variance_prediction):
        assert v == pytest.approx(1.0, abs=1e-6)


# -- exact enumeration and optimality ----------------------------------------

def test_vote_profiles():
    v = vote_profiles(3)
    assert v.shape == (8, 3) and len({tuple(r) for r in v}) == 8


def test_exact_success_brute_force():
    p = np.array([0.9, 0.6, 0.6])
    # brute force by hand: majority needs 2 of 3
    q = 1 - p
    maj = p[0] * p[1] * p[2] + p[0] * p[1] * q[2] + p[0] * q[1] * p[2] + q[0] * p[1] * p[2]
    assert exact_success(p, np.ones(3)) == pytest.approx(maj, abs=1e-15)
    # tie counts 1/2: two voters
    assert exact_success([0.8, 0.6], [1, 1]) == pytest.approx(0.48 + 0.5 * (0.32 + 0.12))
    with pytest.raises(TooLargeForExhaustive):
        exact_success(np.full(16, 0.6), np.ones(16))


def test_optimality_examples():
    rep = optimality_check([0.9, 0.6, 0.6], comparisons=[[1, 0, 0], [0.5, 0.3, 0.2]])
    assert rep.dominated and rep.np_success > rep.unweighted_success
    assert rep.np_success == pytest.approx(0.9)
    rep = optimality_check([0.7] * 3)
    assert rep.np_success == rep.unweighted_success
    rep = optimality_check([0.9] + [0.55] * 4)
    assert rep.dominated and rep.min_margin > 0


def test_optimality_sampled_mode():
    rep = optimality_check([0.9, 0.6, 0.6], exhaustive=False, trials=200_000, seed=1)
    assert rep.np_success == pytest.approx(0.9, abs=0.005)


def test_np_convergence_decreases():
    p = cm.sample(BetaSpec(4, 2), 21, seed=0)
    gaps = np_convergence(p, [10, 100, 1000, 10_000], seeds=range(50))
    assert all(a > b for a, b in zip(gaps, gaps[1:]))
