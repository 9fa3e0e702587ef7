"""Distributions of latent competence on [0, 1].

Four families are supported: Beta laws, Gaussians truncated to an interval,
finite mixtures of those, and point masses (degenerate populations used as
analytic anchors).  All specs are frozen dataclasses; the module-level
functions (:func:`moments`, :func:`pdf`, :func:`sample`, :func:`expect`) are
the public operations.
"""
from dataclasses import dataclass
import math
import warnings

import numpy as np
from scipy import stats
from scipy.special import betaln, ndtr, ndtri

from .errors import DomainError, InfeasiblePoint
from .quadrature import integrate

EXPECT_TOL = 1e-8


@dataclass(frozen=True)
class BetaSpec:
    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise DomainError(f"Beta shapes must be positive, got ({self.alpha}, {self.beta})")
        if self.alpha <= 1 or self.beta <= 1:
            warnings.warn(
                f"Beta({self.alpha}, {self.beta}) is outside the unimodal regime alpha, beta > 1",
                stacklevel=3,
            )

    @property
    def mean(self):
        return self.alpha / (self.alpha + self.beta)

    @property
    def var(self):
        s = self.alpha + self.beta
        return self.alpha * self.beta / (s * s * (s + 1.0))

    def _pdf(self, p):
        return stats.beta.pdf(p, self.alpha, self.beta)

    def _draw(self, rng, size):
        return rng.beta(self.alpha, self.beta, size=size)

    def _breakpoints(self):
        m, sd = self.mean, math.sqrt(self.var)
        pts = [m + k * sd for k in (-8, -4, -2, -1, 0, 1, 2, 4, 8)]
        if self.alpha > 1 and self.beta > 1:
            pts.append((self.alpha - 1) / (self.alpha + self.beta - 2))
        return pts


@dataclass(frozen=True)
class TruncatedNormalSpec:
    """Gaussian with pre-truncation ``location``/``scale``, cut to (lower, upper)."""

    location: float
    scale: float
    lower: float = 0.0
    upper: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise DomainError(f"scale must be positive, got {self.scale}")
        if not self.lower < self.upper:
            raise DomainError("lower must be below upper")
        if self.lower < 0 or self.upper > 1:
            raise DomainError("competence support must lie within [0, 1]")

    def _std_bounds(self):
        return ((self.lower - self.location) / self.scale,
                (self.upper - self.location) / self.scale)

    def _mass(self):
        a, b = self._std_bounds()
        # Use the upper tail when both bounds sit far right, to avoid 1 - 1.
        if a > 0:
            return ndtr(-a) - ndtr(-b)
        return ndtr(b) - ndtr(a)

    @property
    def mean(self):
        a, b = self._std_bounds()
        z = self._mass()
        return self.location + self.scale * (_phi(a) - _phi(b)) / z

    @property
    def var(self):
        a, b = self._std_bounds()
        z = self._mass()
        r = (_phi(a) - _phi(b)) / z
        return self.scale ** 2 * (1.0 + (a * _phi(a) - b * _phi(b)) / z - r * r)

    def _pdf(self, p):
        p = np.asarray(p, dtype=np.float64)
        z = (p - self.location) / self.scale
        dens = np.exp(-0.5 * z * z) / (math.sqrt(2 * math.pi) * self.scale * self._mass())
        return np.where((p >= self.lower) & (p <= self.upper), dens, 0.0)

    def _draw(self, rng, size):
        a, b = self._std_bounds()
        u = rng.random(size)
        if a > 0:
            lo, hi = ndtr(-b), ndtr(-a)
            x = -ndtri(lo + u * (hi - lo))
        else:
            lo, hi = ndtr(a), ndtr(b)
            x = ndtri(lo + u * (hi - lo))
        return np.clip(self.location + self.scale * x, self.lower, self.upper)

    def _breakpoints(self):
        pts = [self.location + k * self.scale for k in (-8, -4, -2, -1, 0, 1, 2, 4, 8)]
        pts.append(self.mean)
        return pts


@dataclass(frozen=True)
class PointMass:
    """Every voter has competence exactly ``value``."""

    value: float

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise DomainError(f"point mass must lie in [0, 1], got {self.value}")

    @property
    def mean(self):
        return float(self.value)

    @property
    def var(self):
        return 0.0

    def _draw(self, rng, size):
        return np.full(size, float(self.value))


@dataclass(frozen=True)
class MixtureSpec:
    components: tuple  # of (weight, spec) pairs

    def __post_init__(self):
        comps = tuple((float(w), c) for w, c in self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise DomainError("mixture needs at least one component")
        weights = np.array([w for w, _ in comps])
        if (weights < 0).any():
            raise DomainError("mixture weights must be nonnegative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise DomainError(f"mixture weights sum to {weights.sum()!r}, not 1")
        for _, c in comps:
            if isinstance(c, (MixtureSpec, PointMass)):
                raise DomainError("mixture components must be Beta or truncated-normal specs")

    @property
    def weights(self):
        return np.array([w for w, _ in self.components])

    @property
    def mean(self):
        return sum(w * c.mean for w, c in self.components)

    @property
    def var(self):
        m = self.mean
        return sum(w * (c.var + (c.mean - m) ** 2) for w, c in self.components)

    def _pdf(self, p):
        return sum(w * c._pdf(p) for w, c in self.components)

    def _draw(self, rng, size):
        size = (size,) if np.isscalar(size) else tuple(size)
        which = rng.choice(len(self.components), size=size, p=self.weights)
        out = np.empty(size)
        for idx, (_, c) in enumerate(self.components):
            mask = which == idx
            out[mask] = c._draw(rng, int(mask.sum()))
        return out


def _phi(x):
    if math.isinf(x):
        return 0.0
    return math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)


def beta_from_mu_sigma(mu, sigma):
    """Invert the Beta moment relations for a target mean and standard deviation.

    alpha = mu * nu and beta = (1 - mu) * nu with nu = mu(1 - mu) / sigma^2 - 1.
    """
    if not 0.0 < mu < 1.0:
        raise DomainError(f"mu must lie in (0, 1), got {mu}")
    if not sigma > 0.0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    var = sigma * sigma
    if var >= mu * (1.0 - mu):
        raise InfeasiblePoint(f"sigma^2 = {var:g} >= mu(1-mu) = {mu * (1 - mu):g}")
    nu = mu * (1.0 - mu) / var - 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return BetaSpec(mu * nu, (1.0 - mu) * nu)


def is_feasible(mu, sigma):
    return 0.0 < mu < 1.0 and sigma > 0.0 and sigma * sigma < mu * (1.0 - mu)


def moments(dist):
    """(mean, variance) of a competence distribution.

    Beta, truncated-normal and point-mass moments are closed form; mixtures
    combine component moments by the laws of total expectation and variance.
    """
    return float(dist.mean), float(dist.var)


def pdf(dist, p):
    p_arr = np.asarray(p, dtype=np.float64)
    if ((p_arr < 0.0) | (p_arr > 1.0) | np.isnan(p_arr)).any():
        raise DomainError(f"density evaluated outside [0, 1]: {p!r}")
    if isinstance(dist, PointMass):
        raise DomainError("a point mass has no density")
    out = dist._pdf(p_arr)
    return float(out) if np.ndim(out) == 0 else out


def draw(dist, rng, size):
    """Sample with a caller-supplied numpy Generator (used by the simulator)."""
    return dist._draw(rng, size)


def sample(dist, count, seed):
    if count < 1:
        raise DomainError("count must be at least 1")
    return draw(dist, np.random.default_rng(seed), int(count))


def expect(dist, h, epsabs=EXPECT_TOL):
    """E_f[h(p)] by adaptive quadrature.

    ``h`` must be vectorized over a 1-d array of competences.  It may return
    a stack of ``m`` rows, in which case an array of ``m`` expectations is
    returned from a single shared subdivision.
    """
    if isinstance(dist, PointMass):
        out = np.asarray(h(np.array([dist.value])), dtype=np.float64)
        return out[..., 0] if out.ndim == 2 else float(out[0])
    if isinstance(dist, MixtureSpec):
        return sum(w * expect(c, h, epsabs) for w, c in dist.components)

    if isinstance(dist, BetaSpec) and (dist.alpha < 1 or dist.beta < 1):
        return _expect_singular_beta(dist, h, epsabs)
    lo, hi = (dist.lower, dist.upper) if isinstance(dist, TruncatedNormalSpec) else (0.0, 1.0)

    def integrand(x):
        vals = np.asarray(h(x), dtype=np.float64)
        return vals * dist._pdf(x)

    value, _ = integrate(integrand, lo, hi, breakpoints=dist._breakpoints(), epsabs=epsabs)
    return value if np.ndim(value) else float(value)


def _expect_singular_beta(dist, h, epsabs):
    """Beta expectation with an unbounded density at 0 and/or 1.

    Near a singular endpoint the substitution p = u^(1/alpha) (resp.
    1 - p = v^(1/beta)) absorbs the p^(alpha-1) factor, leaving a bounded
    integrand in the new variable.
    """
    a, b = dist.alpha, dist.beta
    log_norm = betaln(a, b)
    c = 0.5

    def left(u):
        if a < 1:
            p = u ** (1.0 / a)
            dens = np.exp((b - 1.0) * np.log1p(-p) - log_norm) / a
        else:
            p = u
            dens = dist._pdf(p)
        return np.asarray(h(p), dtype=np.float64) * dens

    def right(v):
        if b < 1:
            p = 1.0 - v ** (1.0 / b)
            dens = np.exp((a - 1.0) * np.log(p) - log_norm) / b
        else:
            p = 1.0 - v
            dens = dist._pdf(p)
        return np.asarray(h(p), dtype=np.float64) * dens

    u_hi = c ** a if a < 1 else c
    v_hi = (1.0 - c) ** b if b < 1 else 1.0 - c
    lv, _ = integrate(left, 0.0, u_hi, epsabs=epsabs / 2)
    rv, _ = integrate(right, 0.0, v_hi, epsabs=epsabs / 2)
    value = lv + rv
    return value if np.ndim(value) else float(value)


def cmm3_wide(mu1, mu3, scale=0.12):
    """Three equal-share truncated-normal groups centered at (mu1, 0.5, mu3)."""
    if not 0.0 < mu1 < 0.5 < mu3 < 1.0:
        raise DomainError(f"need 0 < mu1 < 0.5 < mu3 < 1, got mu1={mu1}, mu3={mu3}")
    third = 1.0 / 3.0
    return MixtureSpec(tuple(
        (third, TruncatedNormalSpec(loc, scale)) for loc in (mu1, 0.5, mu3)
    ))


# -- serialization ----------------------------------------------------------

def to_dict(dist):
    if isinstance(dist, BetaSpec):
        return {"kind": "beta", "alpha": dist.alpha, "beta": dist.beta}
    if isinstance(dist, TruncatedNormalSpec):
        return {"kind": "truncnorm", "location": dist.location, "scale": dist.scale,
                "lower": dist.lower, "upper": dist.upper}
    if isinstance(dist, PointMass):
        return {"kind": "point", "value": dist.value}
    if isinstance(dist, MixtureSpec):
        return {"kind": "mixture",
                "components": [{"weight": w, "dist": to_dict(c)} for w, c in dist.components]}
    raise TypeError(f"not a competence distribution: {dist!r}")


def from_dict(d):
    kind = d.get("kind")
    if kind == "beta":
        return BetaSpec(float(d["alpha"]), float(d["beta"]))
    if kind == "mu_sigma":
        return beta_from_mu_sigma(float(d["mu"]), float(d["sigma"]))
    if kind == "truncnorm":
        return TruncatedNormalSpec(float(d["location"]), float(d["scale"]),
                                   float(d.get("lower", 0.0)), float(d.get("upper", 1.0)))
    if kind == "point":
        return PointMass(float(d["value"]))
    if kind == "cmm3":
        return cmm3_wide(float(d["mu1"]), float(d["mu3"]))
    if kind == "mixture":
        return MixtureSpec(tuple((float(c["weight"]), from_dict(c["dist"]))
                                 for c in d["components"]))
    raise DomainError(f"unknown distribution kind {kind!r}")
