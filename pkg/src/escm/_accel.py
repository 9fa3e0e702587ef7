"""Hot numeric kernels.

Each kernel has a pure-numpy implementation and a numba ``@njit`` twin.
The numba path is used when numba imports cleanly, unless the environment
variable ``ESCM_DISABLE_NUMBA`` is set to a truthy value, in which case the
public names resolve to the numpy versions.  Both versions stay importable
(``*_numpy`` / ``*_numba``) so tests and the benchmark can compare them.
"""
import math
import os

import numpy as np
from scipy.special import gammaln

_FLAG = os.environ.get("ESCM_DISABLE_NUMBA", "").strip().lower()
NUMBA_DISABLED = _FLAG not in ("", "0", "false", "no")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USING_NUMBA = HAVE_NUMBA and not NUMBA_DISABLED


# ---------------------------------------------------------------------------
# E[w(C)] and E[w(C)^2] for C ~ Binomial(L, p), vectorized over p
# ---------------------------------------------------------------------------

def binomial_weight_moments_numpy(p, table):
    p = np.asarray(p, dtype=np.float64)
    table = np.asarray(table, dtype=np.float64)
    L = table.shape[0] - 1
    c = np.arange(L + 1, dtype=np.float64)
    log_comb = gammaln(L + 1.0) - gammaln(c + 1.0) - gammaln(L - c + 1.0)
    flat = p.reshape(-1)
    inner = (flat > 0.0) & (flat < 1.0)
    pmf = np.zeros((flat.shape[0], L + 1))
    pi = flat[inner][:, None]
    pmf[inner] = np.exp(log_comb + c * np.log(pi) + (L - c) * np.log1p(-pi))
    pmf[flat <= 0.0, 0] = 1.0
    pmf[flat >= 1.0, L] = 1.0
    e_w = pmf @ table
    e_w_sq = pmf @ (table * table)
    return e_w.reshape(p.shape), e_w_sq.reshape(p.shape)


def _binomial_weight_moments_loop(p, table):
    n = p.shape[0]
    L = table.shape[0] - 1
    e_w = np.empty(n)
    e_w_sq = np.empty(n)
    log_comb = np.empty(L + 1)
    for c in range(L + 1):
        log_comb[c] = math.lgamma(L + 1.0) - math.lgamma(c + 1.0) - math.lgamma(L - c + 1.0)
    for i in range(n):
        pi = p[i]
        if pi <= 0.0:
            e_w[i] = table[0]
            e_w_sq[i] = table[0] * table[0]
            continue
        if pi >= 1.0:
            e_w[i] = table[L]
            e_w_sq[i] = table[L] * table[L]
            continue
        lp = math.log(pi)
        lq = math.log1p(-pi)
        s1 = 0.0
        s2 = 0.0
        for c in range(L + 1):
            w = math.exp(log_comb[c] + c * lp + (L - c) * lq)
            s1 += w * table[c]
            s2 += w * table[c] * table[c]
        e_w[i] = s1
        e_w_sq[i] = s2
    return e_w, e_w_sq


# ---------------------------------------------------------------------------
# Weighted plurality over a block of elections, with randomized tie-breaking
# ---------------------------------------------------------------------------

TIE_RTOL = 1e-12


def plurality_block_numpy(votes, weights, num_alternatives, u):
    """Return (winner, tie) for each row of a (trials, voters) block.

    ``u`` holds one uniform draw per row; it picks among tied alternatives.
    """
    votes = np.asarray(votes)
    weights = np.asarray(weights, dtype=np.float64)
    T = votes.shape[0]
    tallies = np.empty((T, num_alternatives))
    for m in range(num_alternatives):
        tallies[:, m] = np.where(votes == m, weights, 0.0).sum(axis=1)
    scale = np.maximum(np.abs(weights).sum(axis=1), 1.0)
    top = tallies.max(axis=1)
    tied = tallies >= (top - TIE_RTOL * scale)[:, None]
    k = tied.sum(axis=1)
    pick = np.minimum((u * k).astype(np.int64), k - 1)
    winner = np.argmax(np.cumsum(tied, axis=1) > pick[:, None], axis=1)
    return winner.astype(np.int64), k > 1


def _plurality_block_loop(votes, weights, num_alternatives, u):
    T, n = votes.shape
    winner = np.empty(T, dtype=np.int64)
    tie = np.zeros(T, dtype=np.bool_)
    tallies = np.empty(num_alternatives)
    for t in range(T):
        tallies[:] = 0.0
        scale = 0.0
        for i in range(n):
            tallies[votes[t, i]] += weights[t, i]
            scale += abs(weights[t, i])
        if scale < 1.0:
            scale = 1.0
        top = tallies.max()
        thresh = top - TIE_RTOL * scale
        k = 0
        for m in range(num_alternatives):
            if tallies[m] >= thresh:
                k += 1
        pick = int(u[t] * k)
        if pick > k - 1:
            pick = k - 1
        seen = 0
        for m in range(num_alternatives):
            if tallies[m] >= thresh:
                if seen == pick:
                    winner[t] = m
                    break
                seen += 1
        tie[t] = k > 1
    return winner, tie


if HAVE_NUMBA:
    _bwm_jit = numba.njit(cache=True)(_binomial_weight_moments_loop)
    _pb_jit = numba.njit(cache=True)(_plurality_block_loop)

    def binomial_weight_moments_numba(p, table):
        p = np.asarray(p, dtype=np.float64)
        e_w, e_w_sq = _bwm_jit(np.ascontiguousarray(p.reshape(-1)),
                               np.ascontiguousarray(table, dtype=np.float64))
        return e_w.reshape(p.shape), e_w_sq.reshape(p.shape)

    def plurality_block_numba(votes, weights, num_alternatives, u):
        return _pb_jit(np.ascontiguousarray(votes, dtype=np.int64),
                       np.ascontiguousarray(weights, dtype=np.float64),
                       int(num_alternatives),
                       np.ascontiguousarray(u, dtype=np.float64))
else:  # pragma: no cover
    binomial_weight_moments_numba = binomial_weight_moments_numpy
    plurality_block_numba = plurality_block_numpy


if USING_NUMBA:
    binomial_weight_moments = binomial_weight_moments_numba
    plurality_block = plurality_block_numba
else:
    binomial_weight_moments = binomial_weight_moments_numpy
    plurality_block = plurality_block_numpy
