"""The six-step shared-choice procedure and its benchmark aggregation rules.

Steps: item authoring -> peer review -> difficulty-balanced assignment ->
penalty-scored assessment -> bounded weight map -> weighted plurality.

The step functions operate on :class:`Participant` / :class:`Item` records
for inspection and small demos.  :func:`run_pipeline` executes the same steps
on flat numpy arrays so that large batches of synthetic elections stay cheap;
the two paths share every helper that makes a random or numeric decision.
"""
from dataclasses import asdict, dataclass, field
import hashlib
import json
import math

import numpy as np

from . import competence
from ._accel import plurality_block
from .errors import (
    AllZeroWeights,
    DegenerateDenominator,
    DomainError,
    EmptyElection,
    InfeasibleReviewLoad,
    InsufficientPool,
    ZeroLikelihood,
)

QUALITY_DIMENSIONS = (
    "relevance",
    "clarity",
    "absence_of_bias",
    "factual_correctness",
    "scientific_accuracy",
    "principle_adherence",
)
REVIEW_NOISE = 0.25
DIFFICULTY_SLOPE = 8.0


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightMapSpec:
    """Monotone map from normalized score to voting weight.

    ``kind`` is one of ``linear``, ``power`` (uses ``k``), ``log_odds``
    (uses ``epsilon``) or ``unit`` (every voter weighs 1, i.e. plain majority).
    """

    kind: str = "linear"
    k: float = 1.0
    epsilon: float = 0.1

    KINDS = ("linear", "power", "log_odds", "unit")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise DomainError(f"unknown weight map {self.kind!r}; expected one of {self.KINDS}")
        if self.kind == "power" and not self.k > 0:
            raise DomainError(f"power map needs k > 0, got {self.k}")
        if self.kind == "log_odds" and not self.epsilon > 0:
            raise DomainError(f"log-odds map needs epsilon > 0, got {self.epsilon}")

    @classmethod
    def linear(cls):
        return cls("linear")

    @classmethod
    def power(cls, k):
        return cls("power", k=k)

    @classmethod
    def log_odds(cls, epsilon=0.1):
        return cls("log_odds", epsilon=epsilon)

    @classmethod
    def unit(cls):
        return cls("unit")

    def __call__(self, s_bar):
        return apply_weight_map(s_bar, self)

    def label(self):
        if self.kind == "power":
            return f"power(k={self.k:g})"
        if self.kind == "log_odds":
            return f"log_odds(eps={self.epsilon:g})"
        return self.kind


@dataclass(frozen=True)
class MechanismParams:
    q: int = 4
    l_w: int = 5
    l_r: int = 10
    l_a: int = 10
    m: int = 2
    s_min: float = 0.5
    review_threshold: float = 0.5
    weight_map: WeightMapSpec = field(default_factory=WeightMapSpec)
    # "penalty": wrong answers cost 1/(q-1); "raw": score is the plain correct count
    scoring: str = "penalty"
    difficulty_modulated: bool = False

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise DomainError("; ".join(problems))

    def violations(self):
        out = []
        if not (isinstance(self.q, (int, np.integer)) and self.q >= 2):
            out.append(f"q must be an integer >= 2 (got {self.q})")
        if self.l_w < 0:
            out.append(f"l_w must be >= 0 (got {self.l_w})")
        if self.l_r < 0:
            out.append(f"l_r must be >= 0 (got {self.l_r})")
        if self.l_a < 1:
            out.append(f"l_a must be >= 1 (got {self.l_a})")
        if self.m < 1:
            out.append(f"m must be >= 1 (got {self.m})")
        if not 0 < self.s_min < self.l_a:
            out.append(f"s_min must satisfy 0 < s_min < l_a (got s_min={self.s_min}, l_a={self.l_a})")
        if not 0.0 <= self.review_threshold <= 1.0:
            out.append(f"review_threshold must lie in [0, 1] (got {self.review_threshold})")
        if self.scoring not in ("penalty", "raw"):
            out.append(f"scoring must be 'penalty' or 'raw' (got {self.scoring!r})")
        return out

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if isinstance(d.get("weight_map"), dict):
            d["weight_map"] = WeightMapSpec(**d["weight_map"])
        return cls(**d)

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReviewScores:
    relevance: float
    clarity: float
    absence_of_bias: float
    factual_correctness: float
    scientific_accuracy: float
    principle_adherence: float
    difficulty: float

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not 0.0 <= value <= 1.0:
                raise DomainError(f"review score {name}={value} outside [0, 1]")

    @property
    def quality(self):
        """Mean of the six quality dimensions (difficulty is calibration, not quality)."""
        return sum(getattr(self, d) for d in QUALITY_DIMENSIONS) / len(QUALITY_DIMENSIONS)

    @classmethod
    def from_array(cls, row):
        return cls(*(float(x) for x in row))


@dataclass
class Item:
    id: int
    author: int
    latent_quality: float
    latent_difficulty: float = 0.5
    reviews: list = field(default_factory=list)
    accepted: bool = False

    @property
    def mean_difficulty(self):
        if not self.reviews:
            return None
        return sum(r.difficulty for _, r in self.reviews) / len(self.reviews)


@dataclass
class Participant:
    id: int
    competence: float
    authored: set = field(default_factory=set)
    reviewed: set = field(default_factory=set)
    assigned: list = field(default_factory=list)
    answers: list = field(default_factory=list)
    score: float = None
    s_bar: float = None
    weight: float = None
    vote: int = None


@dataclass(frozen=True)
class WeightBounds:
    omega_min: float
    omega_max: float

    def contains(self, w, slack=1e-12):
        w = np.asarray(w)
        return bool(((w >= self.omega_min - slack) & (w <= self.omega_max + slack)).all())


# ---------------------------------------------------------------------------
# Step 1: authoring
# ---------------------------------------------------------------------------

def _author_arrays(p, l_w, rng):
    authors = np.repeat(np.arange(len(p)), l_w)
    pa = np.asarray(p, dtype=np.float64)[authors]
    quality = rng.beta(2.0 + 4.0 * pa, 2.0 + 4.0 * (1.0 - pa))
    difficulty = rng.random(authors.size)
    return authors, quality, difficulty


def author_items(participants, params, seed):
    """Every participant writes ``l_w`` items; better-informed authors write better items."""
    rng = np.random.default_rng(seed)
    p = [pt.competence for pt in participants]
    authors, quality, difficulty = _author_arrays(p, params.l_w, rng)
    items = []
    for j, (a, qual, diff) in enumerate(zip(authors, quality, difficulty)):
        author = participants[a]
        items.append(Item(id=j, author=author.id, latent_quality=float(qual),
                          latent_difficulty=float(diff)))
        author.authored.add(j)
    return items


# ---------------------------------------------------------------------------
# Step 2: peer review
# ---------------------------------------------------------------------------

def _check_review_load(n, n_items, m, l_r):
    if n_items == 0:
        return
    if n < m + 1:
        raise InfeasibleReviewLoad(f"{n} participants cannot give {m} non-author reviews per item")
    if n * l_r < m * n_items:
        raise InfeasibleReviewLoad(
            f"review capacity n*l_r = {n * l_r} < demand m*|Q0| = {m * n_items}"
        )


def _review_plan(authors, n, m, l_r, rng):
    """Choose ``m`` non-author reviewers per item, each reviewer taking <= l_r items.

    A shuffled cyclic design is tried first: every author's t-th item goes to
    the participants at distinct cyclic offsets, which spreads load evenly
    when authors write equally many items.  Otherwise a greedy least-loaded
    assignment is used.
    """
    authors = np.asarray(authors, dtype=np.int64)
    n_items = authors.size
    _check_review_load(n, n_items, m, l_r)
    if n_items == 0:
        return np.empty((0, m), dtype=np.int64)

    order = rng.permutation(n)
    pos = np.empty(n, dtype=np.int64)
    pos[order] = np.arange(n)
    # per-author running index of each item
    by_author = np.argsort(authors, kind="stable")
    grouped = authors[by_author]
    t = np.empty(n_items, dtype=np.int64)
    t[by_author] = np.arange(n_items) - np.searchsorted(grouped, grouped, side="left")
    shift = rng.integers(n - 1)
    offsets = 1 + (shift + t[:, None] * m + np.arange(m)[None, :]) % (n - 1)
    reviewers = order[(pos[authors][:, None] + offsets) % n]
    if np.bincount(reviewers.ravel(), minlength=n).max() <= l_r:
        return reviewers

    load = np.zeros(n, dtype=np.int64)
    reviewers = np.empty((n_items, m), dtype=np.int64)
    for j in rng.permutation(n_items):
        key = load + rng.random(n)
        key[authors[j]] = np.inf
        key[load >= l_r] = np.inf
        pick = np.argsort(key)[:m]
        if not np.isfinite(key[pick]).all():
            raise InfeasibleReviewLoad(f"greedy reviewer assignment stalled at item {j}")
        reviewers[j] = pick
        load[pick] += 1
    return reviewers


def _review_score_arrays(quality, difficulty, reviewers, p, rng):
    """(items, m, 7) array: six quality dimensions then difficulty."""
    p = np.asarray(p, dtype=np.float64)
    noise_scale = (1.0 - p[reviewers]) * REVIEW_NOISE
    noise = rng.standard_normal(reviewers.shape + (7,)) * noise_scale[..., None]
    base = np.empty(reviewers.shape + (7,))
    base[..., :6] = np.asarray(quality)[:, None, None]
    base[..., 6] = np.asarray(difficulty)[:, None]
    return np.clip(base + noise, 0.0, 1.0)


def review_verdict(reviews, threshold):
    """Accept iff the reviewer-average of per-review quality means reaches ``threshold``."""
    if not reviews:
        return False
    scores = [r.quality for _, r in reviews] if isinstance(reviews[0], tuple) else [
        r.quality for r in reviews]
    return sum(scores) / len(scores) >= threshold


def peer_review(items, participants, params, seed):
    """Attach ``m`` reviews to every item and decide acceptance.

    Returns new :class:`Item` records; each reviewer's ``reviewed`` set is
    updated in place.
    """
    rng = np.random.default_rng(seed)
    index = {pt.id: k for k, pt in enumerate(participants)}
    authors = np.array([index[it.author] for it in items], dtype=np.int64)
    p = np.array([pt.competence for pt in participants])
    reviewers = _review_plan(authors, len(participants), params.m, params.l_r, rng)
    scores = _review_score_arrays([it.latent_quality for it in items],
                                  [it.latent_difficulty for it in items], reviewers, p, rng)
    out = []
    for j, it in enumerate(items):
        reviews = []
        for r in range(params.m):
            who = participants[reviewers[j, r]]
            reviews.append((who.id, ReviewScores.from_array(scores[j, r])))
            who.reviewed.add(it.id)
        accepted = review_verdict(reviews, params.review_threshold)
        out.append(Item(it.id, it.author, it.latent_quality, it.latent_difficulty,
                        reviews, accepted))
    return out


# ---------------------------------------------------------------------------
# Step 3: difficulty-balanced assignment
# ---------------------------------------------------------------------------

def difficulty_terciles(mean_difficulty):
    """Tercile (0, 1, 2) of each item by rank of mean difficulty, ties by position."""
    d = np.asarray(mean_difficulty, dtype=np.float64)
    rank = np.empty(d.size, dtype=np.int64)
    rank[np.argsort(d, kind="stable")] = np.arange(d.size)
    return (3 * rank) // max(d.size, 1)


def _tercile_targets(avail, l_a, rng):
    """Per-participant item counts per tercile: floor/ceil of l_a/3, capped by availability."""
    n = avail.shape[0]
    base, rem = divmod(l_a, 3)
    extra_rank = np.argsort(rng.random((n, 3)), axis=1).argsort(axis=1)
    target = base + (extra_rank < rem).astype(np.int64)
    for i in np.nonzero((target > avail).any(axis=1))[0]:
        tgt = np.minimum(target[i], avail[i])
        short = l_a - tgt.sum()
        while short > 0:
            spare = np.nonzero(tgt < avail[i])[0]
            j = spare[np.argmin(tgt[spare])]
            tgt[j] += 1
            short -= 1
        target[i] = tgt
    return target


def _assign_arrays(eligible, tercile, l_a, rng, ids=None):
    """Indices (n, l_a) of assigned items; ``eligible`` is an (n, items) mask."""
    counts = eligible.sum(axis=1)
    starved = np.nonzero(counts < l_a)[0]
    if starved.size:
        i = starved[0]
        raise InsufficientPool(ids[i] if ids is not None else int(i), int(counts[i]), l_a)
    n = eligible.shape[0]
    onehot = (tercile[:, None] == np.arange(3)[None, :]).astype(np.int64)
    avail = eligible.astype(np.int64) @ onehot
    target = _tercile_targets(avail, l_a, rng)
    # Sort each row by (tercile, random key), ineligible items last; then take
    # the first target[t] entries of every tercile block.
    keys = tercile[None, :] + rng.random(eligible.shape)
    keys[~eligible] = np.inf
    order = np.argsort(keys, axis=1)
    sorted_t = tercile[order]
    start = np.zeros((n, 3), dtype=np.int64)
    start[:, 1] = avail[:, 0]
    start[:, 2] = avail[:, 0] + avail[:, 1]
    rows = np.arange(n)[:, None]
    offset = np.arange(eligible.shape[1])[None, :] - start[rows, sorted_t]
    chosen = (offset < target[rows, sorted_t]) & (keys[rows, order] < np.inf)
    picks = order[chosen].reshape(n, l_a)
    return np.sort(picks, axis=1)


def assign_items(accepted_items, participants, params, seed):
    """Give every participant ``l_a`` accepted items they neither wrote nor reviewed.

    Returns ``{participant id: [item ids]}`` and sets ``Participant.assigned``.
    """
    rng = np.random.default_rng(seed)
    items = [it for it in accepted_items if it.accepted]
    item_ids = np.array([it.id for it in items], dtype=np.int64)
    eligible = np.ones((len(participants), len(items)), dtype=bool)
    for i, pt in enumerate(participants):
        excluded = pt.authored | pt.reviewed
        if excluded:
            eligible[i] = ~np.isin(item_ids, list(excluded))
    tercile = difficulty_terciles([it.mean_difficulty for it in items])
    picks = _assign_arrays(eligible, tercile, params.l_a, rng,
                           ids=[pt.id for pt in participants])
    out = {}
    for pt, row in zip(participants, picks):
        pt.assigned = [int(x) for x in item_ids[row]]
        out[pt.id] = pt.assigned
    return out


# ---------------------------------------------------------------------------
# Step 4: assessment
# ---------------------------------------------------------------------------

def answer_probabilities(p, difficulty, params):
    """Probability of a correct answer for each (participant, assigned item)."""
    p = np.asarray(p, dtype=np.float64)
    if not params.difficulty_modulated:
        return np.broadcast_to(p[:, None], np.shape(difficulty))
    return 1.0 / (1.0 + np.exp(-DIFFICULTY_SLOPE * (p[:, None] - difficulty)))


def score_from_counts(correct, l_a, q, s_min, scoring="penalty"):
    """Floored assessment score from the number of correct answers (vectorized)."""
    correct = np.asarray(correct, dtype=np.float64)
    if scoring == "raw":
        raw = correct
    else:
        raw = correct - (l_a - correct) / (q - 1.0)
    return np.maximum(s_min, raw)


def score_assessment(correct_flags, q, s_min):
    """max(s_min, #correct - #incorrect/(q-1))."""
    if q < 2:
        raise DomainError(f"q must be >= 2, got {q}")
    if not s_min > 0:
        raise DomainError(f"s_min must be positive, got {s_min}")
    flags = np.asarray(correct_flags, dtype=bool)
    return float(score_from_counts(flags.sum(), flags.size, q, s_min))


def normalize_score(s, l_a, s_min=None):
    lo = 0.0 if s_min is None else s_min
    s_arr = np.asarray(s, dtype=np.float64)
    if (s_arr > l_a).any() or (s_arr < lo).any() or (s_arr <= 0).any():
        raise DomainError(f"score {s!r} outside [{lo if s_min else '0+'}, {l_a}]")
    out = s_arr / l_a
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Step 5: weights
# ---------------------------------------------------------------------------

def apply_weight_map(s_bar, spec):
    x = np.asarray(s_bar, dtype=np.float64)
    if spec.kind == "linear":
        out = x.copy()
    elif spec.kind == "power":
        out = x ** spec.k
    elif spec.kind == "log_odds":
        out = np.log((x + spec.epsilon) / (1.0 - x + spec.epsilon))
    else:
        out = np.ones_like(x)
    return float(out) if out.ndim == 0 else out


def weight_table(params, spec=None):
    """Weight reached by each possible correct count C = 0..l_a."""
    spec = params.weight_map if spec is None else spec
    c = np.arange(params.l_a + 1)
    s = score_from_counts(c, params.l_a, params.q, params.s_min, params.scoring)
    return apply_weight_map(s / params.l_a, spec)


def weight_bounds(params, spec=None):
    spec = params.weight_map if spec is None else spec
    return WeightBounds(apply_weight_map(params.s_min / params.l_a, spec),
                        apply_weight_map(1.0, spec))


def normalized_logodds(s_bar, epsilon=0.0):
    """Log-odds weights divided by their sum; epsilon smooths the endpoints."""
    x = np.asarray(s_bar, dtype=np.float64)
    lo = np.log((x + epsilon) / (1.0 - x + epsilon))
    return _normalize_by_sum(lo)


def _normalize_by_sum(v):
    total = v.sum(axis=-1, keepdims=True)
    if (np.abs(total) <= 1e-12).any():
        raise DegenerateDenominator("sum of log-odds weights is zero")
    return v / total


def nitzan_paroush_weights(p):
    """log(p_i/(1-p_i)) normalized to sum to one."""
    p = np.asarray(p, dtype=np.float64)
    if ((p <= 0) | (p >= 1)).any():
        raise DomainError("competences must lie strictly inside (0, 1)")
    return _normalize_by_sum(np.log(p / (1.0 - p)))


# ---------------------------------------------------------------------------
# Step 6: aggregation
# ---------------------------------------------------------------------------

def _as_rng(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def aggregate_weighted_plurality(votes, weights, num_alternatives, rng=None):
    """Winner maximizing total weighted support, and whether a tie was broken.

    Ties (within a relative 1e-12 of the summed absolute weight) are broken
    uniformly at random with ``rng``.
    """
    votes = np.asarray(votes, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)
    if votes.size == 0:
        raise EmptyElection("no votes cast")
    if votes.shape != weights.shape:
        raise DomainError("votes and weights differ in length")
    if num_alternatives < 2:
        raise DomainError("need at least two alternatives")
    if votes.min() < 0 or votes.max() >= num_alternatives:
        raise DomainError("vote index outside the alternative set")
    u = _as_rng(rng).random(1)
    winner, tie = plurality_block(votes[None, :], weights[None, :], num_alternatives, u)
    return int(winner[0]), bool(tie[0])


def log_likelihood_aggregate(votes, profiles, rng=None):
    """Likelihood-optimal winner given known reliability profiles.

    ``profiles[i, s, x]`` is Pr(voter i signals s | true state x); each
    column ``profiles[i, :, x]`` must sum to one.
    """
    votes = np.asarray(votes, dtype=np.int64)
    prof = np.asarray(profiles, dtype=np.float64)
    if votes.size == 0:
        raise EmptyElection("no votes cast")
    if prof.ndim != 3 or prof.shape[1] != prof.shape[2] or prof.shape[0] != votes.size:
        raise DomainError("profiles must have shape (voters, M, M)")
    if ((prof < 0) | (prof > 1)).any() or np.abs(prof.sum(axis=1) - 1.0).max() > 1e-12:
        raise DomainError("each reliability column must be a probability vector")
    rows = prof[np.arange(votes.size), votes, :]  # (n, M): p_i(v_i | x)
    with np.errstate(divide="ignore"):
        loglik = np.log(rows).sum(axis=0)
    if not np.isfinite(loglik).any():
        raise ZeroLikelihood("every alternative has zero likelihood")
    top = loglik.max()
    scale = max(1.0, np.abs(loglik[np.isfinite(loglik)]).max())
    tied = np.nonzero(loglik >= top - 1e-12 * scale)[0]
    if tied.size == 1:
        return int(tied[0]), False
    return int(_as_rng(rng).choice(tied)), True


def symmetric_profile(p, num_alternatives=2):
    """Profile where the correct state is signalled w.p. p, wrong ones uniformly."""
    M = num_alternatives
    off = (1.0 - p) / (M - 1)
    prof = np.full((M, M), off)
    np.fill_diagonal(prof, p)
    return prof


# ---------------------------------------------------------------------------
# Influence metrics
# ---------------------------------------------------------------------------

def influence_shares(weights):
    """|w_i| / sum |w_j|: share of total influence, defined for signed weights too."""
    w = np.abs(np.asarray(weights, dtype=np.float64))
    total = w.sum(axis=-1, keepdims=True)
    if (total <= 0).any():
        raise AllZeroWeights("all weights are zero")
    return w / total


def herfindahl(weights):
    w = np.asarray(weights, dtype=np.float64)
    if (w < 0).any():
        raise DomainError("Herfindahl needs nonnegative weights")
    if abs(w.sum() - 1.0) > 1e-9:
        raise DomainError(f"weights sum to {w.sum()!r}; normalize first")
    if (w == w[0]).all():
        return 1.0 / w.size  # exact for uniform shares
    return float(np.dot(w, w))


def gini(weights):
    w = np.sort(np.asarray(weights, dtype=np.float64))
    if (w < 0).any():
        raise DomainError("Gini needs nonnegative weights")
    total = w.sum()
    if total <= 0:
        raise AllZeroWeights("all weights are zero")
    return float(_paired_gini_sum(w) / (w.size * total))


def _paired_gini_sum(s):
    """sum_i (2i - n - 1) s_(i) for ascending ``s`` (last axis), as paired differences.

    Pairing the i-th smallest with the i-th largest makes equal weights cancel
    exactly, so a uniform vector gives a Gini of exactly zero.
    """
    n = s.shape[-1]
    k = n // 2
    coef = n + 1 - 2 * np.arange(1, k + 1)
    return (s[..., ::-1][..., :k] - s[..., :k]) @ coef


def steepness_ratio(l_a, k):
    """Weight ratio of one mistake vs a perfect score under s^k, and its exp approximation."""
    if l_a < 1 or not k > 0:
        raise DomainError("need l_a >= 1 and k > 0")
    return (1.0 - 1.0 / l_a) ** k, math.exp(-k / l_a)


# ---------------------------------------------------------------------------
# End-to-end pipeline
# ---------------------------------------------------------------------------

@dataclass
class ElectionRecord:
    seed: int
    params: MechanismParams
    truth: int
    num_alternatives: int
    competence: np.ndarray
    item_author: np.ndarray
    item_reviewers: np.ndarray
    review_scores: np.ndarray
    item_accepted: np.ndarray
    assigned: np.ndarray  # (n, l_a) indices into the accepted items
    accepted_ids: np.ndarray
    answers: np.ndarray
    scores: np.ndarray
    s_bar: np.ndarray
    weights: np.ndarray
    votes: np.ndarray
    winner: int
    tie: bool
    herfindahl: float
    gini: float

    @property
    def success(self):
        return self.winner == self.truth

    @property
    def n(self):
        return self.competence.size

    def items(self):
        out = []
        for j in range(self.item_author.size):
            reviews = [(int(r), ReviewScores.from_array(self.review_scores[j, k]))
                       for k, r in enumerate(self.item_reviewers[j])]
            out.append(Item(j, int(self.item_author[j]), float("nan"), float("nan"),
                            reviews, bool(self.item_accepted[j])))
        return out

    def participants(self):
        out = []
        for i in range(self.n):
            out.append(Participant(
                id=i,
                competence=float(self.competence[i]),
                authored=set(np.nonzero(self.item_author == i)[0].tolist()),
                reviewed=set(np.nonzero((self.item_reviewers == i).any(axis=1))[0].tolist()),
                assigned=self.accepted_ids[self.assigned[i]].tolist(),
                answers=self.answers[i].tolist(),
                score=float(self.scores[i]),
                s_bar=float(self.s_bar[i]),
                weight=float(self.weights[i]),
                vote=int(self.votes[i]),
            ))
        return out

    def summary(self):
        return {
            "winner": self.winner,
            "truth": self.truth,
            "tie": self.tie,
            "herfindahl": self.herfindahl,
            "gini": self.gini,
            "seed": self.seed,
            "n": self.n,
            "params_hash": self.params.digest(),
        }

    def write(self, path):
        """Per-participant CSV at ``path`` plus a one-line JSON summary beside it."""
        from pathlib import Path

        path = Path(path)
        lines = ["id,p,s,s_bar,w,v"]
        for i in range(self.n):
            lines.append(f"{i},{self.competence[i]:.9g},{self.scores[i]:.9g},"
                         f"{self.s_bar[i]:.9g},{self.weights[i]:.9g},{self.votes[i]}")
        path.write_text("\n".join(lines) + "\n")
        summary = path.with_suffix(".summary.json")
        summary.write_text(json.dumps(self.summary(), sort_keys=True) + "\n")
        return path, summary


def draw_votes(p, truth, num_alternatives, rng):
    """Correct with probability p_i, otherwise uniform over the wrong alternatives."""
    p = np.asarray(p, dtype=np.float64)
    correct = rng.random(p.shape) < p
    if num_alternatives == 2:
        wrong = np.full(p.shape, 1 - truth)
    else:
        wrong = rng.integers(num_alternatives - 1, size=p.shape)
        wrong = wrong + (wrong >= truth)
    return np.where(correct, truth, wrong).astype(np.int64)


def run_pipeline(population, params, n, seed, num_alternatives=2, truth=0):
    """Run steps 1-6 on a synthetic electorate of ``n`` voters.

    ``population`` is a competence distribution or an explicit array of
    competences.  The whole record is a pure function of the arguments.
    """
    rng = np.random.default_rng(seed)
    if isinstance(population, np.ndarray) or isinstance(population, (list, tuple)):
        p = np.asarray(population, dtype=np.float64)
        if p.size != n:
            raise DomainError(f"expected {n} competences, got {p.size}")
    else:
        p = competence.draw(population, rng, n)

    authors, quality, difficulty = _author_arrays(p, params.l_w, rng)
    reviewers = _review_plan(authors, n, params.m, params.l_r, rng)
    scores7 = _review_score_arrays(quality, difficulty, reviewers, p, rng)
    m = params.m
    accepted = scores7[..., :6].sum(axis=(1, 2)) / (6 * m) >= params.review_threshold
    mean_diff = scores7[..., 6].sum(axis=1) / m

    acc_ids = np.nonzero(accepted)[0]
    who = np.arange(n)[:, None]
    eligible = authors[acc_ids][None, :] != who
    for k in range(m):
        eligible &= reviewers[acc_ids, k][None, :] != who
    assigned = _assign_arrays(eligible, difficulty_terciles(mean_diff[acc_ids]), params.l_a, rng)

    probs = answer_probabilities(p, mean_diff[acc_ids][assigned], params)
    answers = rng.random(assigned.shape) < probs
    correct = answers.sum(axis=1)
    s = score_from_counts(correct, params.l_a, params.q, params.s_min, params.scoring)
    s_bar = s / params.l_a
    w = apply_weight_map(s_bar, params.weight_map)

    votes = draw_votes(p, truth, num_alternatives, rng)
    # same draw order as aggregate_weighted_plurality, minus its input checks
    winner, tie = plurality_block(votes[None, :], w[None, :], num_alternatives, rng.random(1))
    winner, tie = int(winner[0]), bool(tie[0])
    shares = influence_shares(w)
    return ElectionRecord(
        seed=seed, params=params, truth=truth, num_alternatives=num_alternatives,
        competence=p, item_author=authors, item_reviewers=reviewers,
        review_scores=scores7, item_accepted=accepted, assigned=assigned,
        accepted_ids=acc_ids, answers=answers, scores=s, s_bar=s_bar, weights=w,
        votes=votes, winner=winner, tie=tie,
        herfindahl=float(np.dot(shares, shares)), gini=gini(shares),
    )
