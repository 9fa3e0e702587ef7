"""Success probabilities of majority rule and weighted aggregation.

Majority rule is evaluated exactly through the binomial upper tail.  The
weighted rule uses the Gaussian approximation of T_n = sum_i w_i Y_i, whose
per-voter moments integrate the exact finite-sum expectation of the weight
over assessment outcomes against the competence density.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc, ndtr

from . import competence
from ._accel import binomial_weight_moments
from .errors import DegenerateVariance, DomainError
from .mechanism import weight_table

VARIANCE_MODES = ("paper", "total_variance")


@dataclass(frozen=True)
class SignalMoments:
    mu_T: float
    sigma_T_sq: float
    mode: str
    # E_f[E[w^2 | p]]; kept so either variance mode can be derived afterwards
    second_moment: float = float("nan")

    @property
    def snr(self):
        return self.mu_T / np.sqrt(self.sigma_T_sq)


@dataclass(frozen=True)
class SuccessProbability:
    value: float
    method: str

    def __float__(self):
        return float(self.value)


@dataclass(frozen=True)
class GainResult:
    gain: float
    p_escm: SuccessProbability
    p_cjt: SuccessProbability
    moments: SignalMoments
    mean_competence: float


def expected_weight_given_p(p, params, spec=None):
    """(E[w | p], E[w^2 | p]) with the correct count C ~ Binomial(l_a, p).

    Exact finite sum over the l_a + 1 outcomes; ``p`` may be an array.
    """
    table = weight_table(params, spec)
    p_arr = np.asarray(p, dtype=np.float64)
    if ((p_arr < 0) | (p_arr > 1)).any():
        raise DomainError("competence outside [0, 1]")
    e_w, e_w_sq = binomial_weight_moments(np.atleast_1d(p_arr), table)
    if p_arr.ndim == 0:
        return float(e_w[0]), float(e_w_sq[0])
    return e_w, e_w_sq


def moments_from_table(dist, table, mode="paper"):
    """Signal moments for an explicit weight-per-correct-count table."""
    if mode not in VARIANCE_MODES:
        raise DomainError(f"unknown variance mode {mode!r}")
    table = np.asarray(table, dtype=np.float64)

    def integrands(p):
        e_w, e_w_sq = binomial_weight_moments(p, table)
        drift = 2.0 * p - 1.0
        return np.vstack([e_w * drift, e_w_sq * (1.0 - drift * drift), e_w_sq])

    mu, paper_var, second = competence.expect(dist, integrands)
    var = paper_var if mode == "paper" else second - mu * mu
    return SignalMoments(float(mu), float(max(var, 0.0)), mode, float(second))


def signal_moments(dist, params, spec=None, mode="paper"):
    """Per-voter mean and variance terms of the weighted signal.

    ``paper`` mode uses E_f[E[w^2|p] (1 - (2p-1)^2)]; ``total_variance``
    uses the exact Var(wY) = E_f[E[w^2|p]] - mu_T^2.
    """
    return moments_from_table(dist, weight_table(params, spec), mode)


def with_mode(moments, mode):
    """Re-express already computed moments in another variance mode.

    Only the total_variance direction is recoverable from stored fields.
    """
    if mode == moments.mode:
        return moments
    if mode == "total_variance":
        return SignalMoments(moments.mu_T, max(moments.second_moment - moments.mu_T ** 2, 0.0),
                             mode, moments.second_moment)
    raise DomainError("cannot recover paper-mode variance from total-variance moments")


def _check_odd(n):
    if int(n) != n or n < 1 or n % 2 == 0:
        raise DomainError(f"electorate size must be a positive odd integer, got {n}")


def cjt_success(n, mu_bar):
    """Pr(Bin(n, mu_bar) >= (n+1)/2) through the regularized incomplete beta."""
    _check_odd(n)
    if not 0.0 <= mu_bar <= 1.0:
        raise DomainError(f"mean competence must lie in [0, 1], got {mu_bar}")
    k = (n + 1) // 2
    # Pr(X >= k) = I_mu(k, k) for odd n.  The smaller tail is evaluated
    # directly, which keeps mu = 0.5 exact and the antisymmetry tight.
    if mu_bar == 0.5:
        value = 0.5
    elif mu_bar < 0.5:
        value = float(betainc(k, k, mu_bar))
    else:
        value = 1.0 - float(betainc(k, k, 1.0 - mu_bar))
    return SuccessProbability(value, "exact_binomial")


def cjt_failure(n, mu_bar):
    """Pr(Bin(n, mu_bar) <= (n-1)/2), computed directly rather than as 1 - success."""
    _check_odd(n)
    if not 0.0 <= mu_bar <= 1.0:
        raise DomainError(f"mean competence must lie in [0, 1], got {mu_bar}")
    k = (n + 1) // 2
    return float(betainc(k, k, 1.0 - mu_bar))


def escm_success(n, moments):
    """Gaussian approximation Pr(T_n > 0) = Phi(sqrt(n) mu_T / sigma_T)."""
    if not moments.sigma_T_sq > 0:
        raise DegenerateVariance(f"sigma_T^2 = {moments.sigma_T_sq!r}")
    z = np.sqrt(n) * moments.mu_T / np.sqrt(moments.sigma_T_sq)
    return SuccessProbability(float(ndtr(z)), "gaussian_clt")


def gain(dist, params, n, spec=None, mode="paper"):
    """P_ESCM - P_CJT, with both parts returned for inspection."""
    _check_odd(n)
    mom = signal_moments(dist, params, spec, mode)
    mu_bar = competence.moments(dist)[0]
    p_cjt = cjt_success(n, mu_bar)
    p_escm = escm_success(n, mom) if mom.sigma_T_sq > 0 else _saturated(mom)
    return GainResult(p_escm.value - p_cjt.value, p_escm, p_cjt, mom, mu_bar)


def _saturated(mom):
    """Zero-variance limit: T_n is deterministic, so success is its sign."""
    value = 1.0 if mom.mu_T > 0 else (0.5 if mom.mu_T == 0 else 0.0)
    return SuccessProbability(value, "gaussian_clt")
