"""Seeded Monte Carlo oracle for success probabilities and influence metrics.

Trials are grouped in fixed-size blocks.  Block ``b`` draws from its own
stream ``SeedSequence(seed, spawn_key=(b,))``, so a report depends only on
the configuration and never on execution order or the number of workers.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import hashlib
import itertools
import json

import numpy as np

from . import analytics, competence
from ._accel import plurality_block
from .errors import DegenerateVariance, DomainError, TooLargeForExhaustive
from .mechanism import (
    MechanismParams,
    _paired_gini_sum,
    draw_votes,
    normalized_logodds,
    nitzan_paroush_weights,
    run_pipeline,
    score_from_counts,
    weight_table,
)

BLOCK = 500
RULES = ("escm", "cjt_majority", "nitzan_paroush_oracle", "likelihood_oracle")
CLIP = 1e-12


@dataclass(frozen=True)
class TrialConfig:
    dist: object
    params: MechanismParams
    n: int
    trials: int
    seed: int
    pipeline: bool = False
    rule: str = "escm"
    num_alternatives: int = 2
    mode: str = "total_variance"

    def __post_init__(self):
        if self.trials < 1 or self.n < 1:
            raise DomainError("trials and n must be >= 1")
        if self.rule not in RULES:
            raise DomainError(f"unknown rule {self.rule!r}; expected one of {RULES}")
        if self.num_alternatives < 2:
            raise DomainError("need at least two alternatives")


@dataclass
class TrialReport:
    success_rate: float
    standard_error: float
    mean_herfindahl: float
    mean_gini: float
    tie_rate: float
    clt_prediction: float
    seeds_hash: str
    trials: int
    rule: str

    def to_dict(self):
        return dict(self.__dict__)


def block_rng(seed, block):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def _row_gini(shares):
    return _paired_gini_sum(np.sort(shares, axis=1)) / shares.shape[1]  # rows sum to one


def _influence(weights):
    w = np.abs(weights)
    total = w.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        shares = w / total
    return (shares * shares).sum(axis=1), _row_gini(shares)


def _oracle_weights(p, rule, M):
    pc = np.clip(p, CLIP, 1.0 - CLIP)
    if rule == "nitzan_paroush_oracle":
        return np.log(pc / (1.0 - pc))
    return np.log((M - 1) * pc / (1.0 - pc))


def _fast_block(cfg, table, b, size):
    rng = block_rng(cfg.seed, b)
    M = cfg.num_alternatives
    p = competence.draw(cfg.dist, rng, (size, cfg.n))
    if cfg.rule == "escm":
        correct = rng.binomial(cfg.params.l_a, p)
        w = table[correct]
    elif cfg.rule == "cjt_majority":
        w = np.ones_like(p)
    else:
        w = _oracle_weights(p, cfg.rule, M)
    votes = draw_votes(p, 0, M, rng)
    winner, tie = plurality_block(votes, w, M, rng.random(size))
    h, g = _influence(w)
    return (winner == 0).sum(), tie.sum(), np.nansum(h), np.nansum(g), np.isfinite(h).sum()


def _pipeline_block(cfg, b, size):
    rng = block_rng(cfg.seed, b)
    p = competence.draw(cfg.dist, rng, (size, cfg.n))
    seeds = rng.integers(2 ** 63 - 1, size=size)
    wins = ties = 0
    hs = gs = 0.0
    for t in range(size):
        rec = run_pipeline(p[t], cfg.params, cfg.n, int(seeds[t]), cfg.num_alternatives, 0)
        wins += rec.success
        ties += rec.tie
        hs += rec.herfindahl
        gs += rec.gini
    return wins, ties, hs, gs, size


def _prediction(cfg):
    if cfg.num_alternatives != 2:
        return float("nan")
    if cfg.rule == "cjt_majority":
        mean = competence.moments(cfg.dist)[0]
        if cfg.n % 2:
            return analytics.cjt_success(cfg.n, mean).value
        return clt_success(cfg.n, analytics.SignalMoments(
            2 * mean - 1, 4 * mean * (1 - mean), "paper"))
    if cfg.rule == "escm":
        mom = analytics.signal_moments(cfg.dist, cfg.params, mode=cfg.mode)
        return clt_success(cfg.n, mom)
    return float("nan")


def clt_success(n, moments):
    """Gaussian success probability, falling back to the sign of mu_T when T_n is deterministic."""
    try:
        return analytics.escm_success(n, moments).value
    except DegenerateVariance:
        return 1.0 if moments.mu_T > 0 else (0.5 if moments.mu_T == 0 else 0.0)


def _seeds_hash(cfg):
    key = {
        "seed": cfg.seed, "trials": cfg.trials, "block": BLOCK, "n": cfg.n,
        "rule": cfg.rule, "pipeline": cfg.pipeline, "M": cfg.num_alternatives,
        "params": cfg.params.digest(), "dist": competence.to_dict(cfg.dist),
    }
    return hashlib.sha256(json.dumps(key, sort_keys=True).encode()).hexdigest()[:16]


def simulate(cfg, threads=1):
    """Estimate the success probability of ``cfg.rule`` by repeated elections."""
    n_blocks = -(-cfg.trials // BLOCK)
    sizes = [min(BLOCK, cfg.trials - b * BLOCK) for b in range(n_blocks)]
    table = weight_table(cfg.params)

    def work(b):
        if cfg.pipeline and cfg.rule == "escm":
            return _pipeline_block(cfg, b, sizes[b])
        return _fast_block(cfg, table, b, sizes[b])

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(work, range(n_blocks)))
    else:
        parts = [work(b) for b in range(n_blocks)]
    wins, ties, hs, gs, counted = (sum(col) for col in zip(*parts))
    rate = wins / cfg.trials
    return TrialReport(
        success_rate=float(rate),
        standard_error=float(np.sqrt(rate * (1 - rate) / cfg.trials)),
        mean_herfindahl=float(hs / counted) if counted else float("nan"),
        mean_gini=float(gs / counted) if counted else float("nan"),
        tie_rate=float(ties / cfg.trials),
        clt_prediction=float(_prediction(cfg)),
        seeds_hash=_seeds_hash(cfg),
        trials=cfg.trials,
        rule=cfg.rule,
    )


@dataclass
class ValidationReport:
    monte_carlo: float
    standard_error: float
    paper_prediction: float
    total_variance_prediction: float
    paper_gap: float
    total_variance_gap: float
    better_mode: str
    exact_binomial: float = float("nan")
    trials: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return dict(self.__dict__)


def validate_clt(dist, params, n, trials, seed, threads=1):
    """Compare Monte Carlo ESCM success with both Gaussian variance modes."""
    if trials < 10_000:
        raise DomainError("CLT validation needs at least 10^4 trials")
    report = simulate(TrialConfig(dist, params, n, trials, seed), threads=threads)
    preds = {mode: clt_success(n, analytics.signal_moments(dist, params, mode=mode))
             for mode in analytics.VARIANCE_MODES}
    gaps = {mode: abs(report.success_rate - v) for mode, v in preds.items()}
    exact = float("nan")
    if params.weight_map.kind == "unit" and n % 2:
        exact = analytics.cjt_success(n, competence.moments(dist)[0]).value
    return ValidationReport(
        monte_carlo=report.success_rate,
        standard_error=report.standard_error,
        paper_prediction=preds["paper"],
        total_variance_prediction=preds["total_variance"],
        paper_gap=gaps["paper"],
        total_variance_gap=gaps["total_variance"],
        better_mode="total_variance" if gaps["total_variance"] <= gaps["paper"] else "paper",
        exact_binomial=exact,
        trials=trials,
        extra={"mean_herfindahl": report.mean_herfindahl, "mean_gini": report.mean_gini,
               "tie_rate": report.tie_rate, "seeds_hash": report.seeds_hash},
    )


# ---------------------------------------------------------------------------
# Exact optimality by enumeration of binary vote profiles
# ---------------------------------------------------------------------------

MAX_EXHAUSTIVE = 15


def vote_profiles(n):
    """All 2^n correctness patterns as a (2^n, n) 0/1 array."""
    return np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.int8)


def exact_success(p, weights, profiles=None):
    """Exact Pr(correct) of weighted majority; a tie is a coin flip."""
    p = np.asarray(p, dtype=np.float64)
    n = p.size
    if n > MAX_EXHAUSTIVE:
        raise TooLargeForExhaustive(f"n = {n} exceeds {MAX_EXHAUSTIVE}")
    y = vote_profiles(n) if profiles is None else profiles
    with np.errstate(divide="ignore"):
        logp = np.where(y == 1, np.log(p), np.log1p(-p)).sum(axis=1)
    prob = np.exp(logp)
    w = np.atleast_2d(np.asarray(weights, dtype=np.float64))
    margin = (2 * y - 1).astype(np.float64) @ w.T  # (profiles, rules)
    tol = 1e-12 * np.maximum(np.abs(w).sum(axis=1), 1.0)
    credit = np.where(margin > tol, 1.0, np.where(margin >= -tol, 0.5, 0.0))
    out = prob @ credit
    return out if np.ndim(weights) == 2 else float(out[0])


@dataclass
class OptimalityReport:
    np_success: float
    unweighted_success: float
    comparisons: list
    dominated: bool
    min_margin: float
    exhaustive: bool


def optimality_check(p, comparisons=(), exhaustive=True, trials=100_000, seed=0):
    """Is log-odds weighted majority at least as accurate as every other weighting?"""
    p = np.asarray(p, dtype=np.float64)
    pc = np.clip(p, CLIP, 1.0 - CLIP)
    np_w = np.log(pc / (1.0 - pc))
    rules = np.vstack([np_w, np.ones_like(p)] + [np.asarray(c, float) for c in comparisons])
    if exhaustive:
        succ = exact_success(p, rules)
    else:
        rng = np.random.default_rng(seed)
        y = (rng.random((trials, p.size)) < p).astype(np.int8)
        margin = (2 * y - 1).astype(np.float64) @ rules.T
        tol = 1e-12 * np.abs(rules).sum(axis=1)
        succ = np.where(margin > tol, 1.0, np.where(margin >= -tol, 0.5, 0.0)).mean(axis=0)
    margins = succ[0] - succ[1:]
    return OptimalityReport(
        np_success=float(succ[0]),
        unweighted_success=float(succ[1]),
        comparisons=[float(s) for s in succ[2:]],
        dominated=bool((margins >= -1e-12).all()),
        min_margin=float(margins.min()),
        exhaustive=exhaustive,
    )


def escm_weight_draws(p, params, draws, seed):
    """ESCM weight vectors from ``draws`` independent simulated assessments."""
    rng = np.random.default_rng(seed)
    correct = rng.binomial(params.l_a, np.broadcast_to(p, (draws, len(p))))
    return weight_table(params)[correct]


def np_convergence(p, assessment_lengths, seeds, s_min=0.5):
    """Mean max-norm gap between normalized smoothed log-odds ESCM weights and NP weights.

    Scores are raw correct counts so that s/l_a is a consistent estimate of
    p; the smoothing constant is annealed as 1/l_a.
    """
    target = nitzan_paroush_weights(p)
    out = []
    for l_a in assessment_lengths:
        gaps = []
        for s in seeds:
            rng = np.random.default_rng([s, l_a])
            correct = rng.binomial(l_a, p)
            s_bar = score_from_counts(correct, l_a, 2, min(s_min, l_a / 2), "raw") / l_a
            w = normalized_logodds(s_bar, 1.0 / l_a)
            gaps.append(np.abs(w - target).max())
        out.append(float(np.mean(gaps)))
    return out
