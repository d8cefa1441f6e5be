"""Closed-form limit constants and offspring distributions.

All quantities are n -> infinity limits for the regular design with
individual degree delta and density d:

* ``p0(d, delta)``   chance an uninfected individual sees only positive tests
* ``p1(d, lam, delta)``  chance an infected individual is never forced
* ``q0``, ``q1``     chance a test at a non-hard root survives the reduction
* compound laws for the per-type counts of second neighbours of a root in
  the reduced graph: Bernoulli-thinned sums of Poisson / zero-truncated
  Poisson variables (univariate for uninfected roots, a bivariate pair law
  for infected roots).

The q1 expression is implemented exactly as stated even though it exceeds 1
for some valid parameters (e.g. delta = 1); callers receive the raw value
with an in-range flag and clamp only where a probability is consumed.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import binom, poisson

DEFAULT_TAIL_TOL = 1e-12
MAX_CUTOFF = 20_000

V0PLUS = "V0plus"
V1PLUS = "V1plus"


class TruncationError(RuntimeError):
    """Raised when a PMF cannot reach the target tail mass by MAX_CUTOFF."""


def p0(d, delta):
    """(1 - e^-d)^delta; the empty product at delta = 0 is 1."""
    if d <= 0:
        raise ValueError(f"d must be positive, got {d}")
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    return float((-math.expm1(-d)) ** delta)


def _p1(d, lam, delta):
    # delta = 0 allowed internally: empty product convention, value 1
    if delta == 0:
        return 1.0
    return float((-math.expm1(-d - d * (1.0 - lam) / lam * p0(d, delta - 1))) ** delta)


def p1(d, lam, delta):
    """(1 - exp(-d - d*(1-lam)/lam * p0(d, delta-1)))^delta for delta >= 1."""
    if not (0.0 < lam < 1.0):
        raise ValueError(f"lambda must lie in (0, 1), got {lam}")
    if delta < 1:
        raise ValueError(f"delta must be >= 1, got {delta}")
    return _p1(d, lam, delta)


def q0(d, lam, delta):
    """Survival chance of a test at an uninfected non-hard root.

    (1 - exp(-d*p1_{delta-1})) * exp(-d*(1 - p1_{delta-1})) / (1 - e^-d);
    always a probability.
    """
    if delta < 1:
        raise ValueError(f"delta must be >= 1, got {delta}")
    p1m = _p1(d, lam, delta - 1)
    return float(-math.expm1(-d * p1m) * math.exp(-d * (1.0 - p1m)) / -math.expm1(-d))


def q1(d, lam, delta):
    """Survival chance of a test at an infected non-hard root, as written.

    Returns ``(value, in_range)``; the expression can exceed 1 (its
    normalizer ignores the uninfected-member route into compatibility), so
    consumers must clamp when using it as a probability.
    """
    if not (0.0 < lam < 1.0):
        raise ValueError(f"lambda must lie in (0, 1), got {lam}")
    if delta < 1:
        raise ValueError(f"delta must be >= 1, got {delta}")
    p0m = p0(d, delta - 1)
    p1m = _p1(d, lam, delta - 1)
    value = float(-math.expm1(-d * (1.0 - lam) / lam * p0m - d * p1m)
                  * math.exp(-d * (1.0 - p1m)) / -math.expm1(-d))
    return value, 0.0 <= value <= 1.0


@dataclass(frozen=True)
class AnalyticConstants:
    """All scalar constants for one (d, lambda, delta) triple.

    mu0 and mu1 are the Poisson means of the per-surviving-test counts of
    uninfected and infected non-hard second neighbours.
    """

    d: float
    lam: float
    delta: int
    p0_delta: float
    p0_delta_minus1: float
    p1_delta: float
    p1_delta_minus1: float
    q0: float
    q1_raw: float
    q1_in_range: bool
    mu0: float
    mu1: float

    @property
    def q1_clamped(self):
        return min(max(self.q1_raw, 0.0), 1.0)


def constants(d, lam, delta):
    """Evaluate every scalar of :class:`AnalyticConstants`.

    Warns when the q1 expression leaves [0, 1].
    """
    if delta < 1:
        raise ValueError(f"delta must be >= 1, got {delta}")
    p1m = _p1(d, lam, delta - 1)
    q1_value, q1_ok = q1(d, lam, delta)
    if not q1_ok:
        warnings.warn(f"q1 = {q1_value:.6g} outside [0, 1] at "
                      f"(d={d:.6g}, lambda={lam:.6g}, delta={delta}); "
                      "downstream laws use the clamped value", RuntimeWarning)
    return AnalyticConstants(
        d=float(d), lam=float(lam), delta=int(delta),
        p0_delta=p0(d, delta),
        p0_delta_minus1=p0(d, delta - 1),
        p1_delta=p1(d, lam, delta),
        p1_delta_minus1=p1m,
        q0=q0(d, lam, delta),
        q1_raw=q1_value,
        q1_in_range=q1_ok,
        mu0=float((1.0 - lam) / lam * d * p0(d, delta - 1)),
        mu1=float(d * p1m),
    )


@dataclass(frozen=True)
class OffspringPMF:
    """Finite truncated PMF on {0..J} (1-D) or {0..J0} x {0..J1} (2-D).

    ``tail_mass`` is the probability lost to truncation; builders guarantee
    it stays below the requested tolerance and never renormalize, so total
    mass is 1 - tail_mass exactly.
    """

    probs: np.ndarray
    tail_mass: float

    def __post_init__(self):
        if (self.probs < 0).any():
            raise ValueError("PMF entries must be nonnegative")

    @property
    def jmax(self):
        return tuple(s - 1 for s in self.probs.shape) if self.probs.ndim > 1 \
            else self.probs.shape[0] - 1

    @property
    def total_mass(self):
        return float(self.probs.sum())

    def mean(self):
        if self.probs.ndim == 1:
            return float(self.probs @ np.arange(self.probs.shape[0]))
        j = np.arange(self.probs.shape[0])
        k = np.arange(self.probs.shape[1])
        return (float((self.probs.sum(axis=1) * j).sum()),
                float((self.probs.sum(axis=0) * k).sum()))

    def marginal(self, axis):
        """Marginal of a bivariate PMF along the kept axis (0 or 1)."""
        if self.probs.ndim != 2:
            raise ValueError("marginal() requires a bivariate PMF")
        return OffspringPMF(probs=self.probs.sum(axis=1 - axis),
                            tail_mass=self.tail_mass)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            if self.probs.ndim == 1:
                writer.writerow(["j", "probability"])
                for j, pj in enumerate(self.probs):
                    writer.writerow([j, repr(float(pj))])
            else:
                writer.writerow(["j", "k", "probability"])
                for j in range(self.probs.shape[0]):
                    for k in range(self.probs.shape[1]):
                        writer.writerow([j, k, repr(float(self.probs[j, k]))])

    def to_json_dict(self):
        return {"shape": list(self.probs.shape),
                "tail_mass": self.tail_mass,
                "probs": self.probs.tolist()}

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)


def poisson_tail_cutoff(mu, tol=DEFAULT_TAIL_TOL):
    """Smallest j with Chernoff bound exp(-mu)*(e*mu/j)^j below tol."""
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    if mu == 0.0:
        return 1
    j = max(1, math.ceil(mu))
    while j <= MAX_CUTOFF:
        if j > mu and -mu + j * (math.log(mu) + 1.0 - math.log(j)) < math.log(tol):
            return j
        j += 1
    raise TruncationError(f"no cutoff below {MAX_CUTOFF} for Po({mu})")


def truncated_poisson_pmf(mu, jmax=None, tol=DEFAULT_TAIL_TOL):
    """Zero-truncated Poisson: Pr(j) = 1{j>=1} Pois(j; mu) / (1 - e^-mu).

    mu = 0 is rejected: the conditioning event has probability zero.
    """
    if mu <= 0:
        raise ValueError(f"zero-truncated Poisson needs mu > 0, got {mu}")
    if jmax is None:
        jmax = poisson_tail_cutoff(mu, tol)
    probs = poisson.pmf(np.arange(jmax + 1), mu) / -math.expm1(-mu)
    probs[0] = 0.0
    pmf = OffspringPMF(probs=probs, tail_mass=float(1.0 - probs.sum()))
    if pmf.tail_mass > tol:
        raise TruncationError(f"tail mass {pmf.tail_mass:.3g} > {tol} at jmax={jmax}")
    return pmf


def _grow_until(build, start, tol, what):
    """Double a cutoff until the built PMF's tail is below tol."""
    size = start
    while size <= MAX_CUTOFF:
        probs = build(size)
        tail = float(1.0 - probs.sum())
        if tail <= tol:
            return OffspringPMF(probs=probs, tail_mass=tail)
        size *= 2
    raise TruncationError(f"{what}: tail above {tol} at cutoff {MAX_CUTOFF}")


def pmf_v0plus_offspring(consts, delta=None, tol=DEFAULT_TAIL_TOL):
    """Second-neighbour count laws for an uninfected non-hard root.

    Returns ``(law_uninfected, law_infected)``: Binomial(delta, q0) mixtures
    of Poisson(t*mu0) (superposition closed form) and of t-fold convolutions
    of the zero-truncated Poisson(mu1).
    """
    if delta is None:
        delta = consts.delta
    weights = binom.pmf(np.arange(delta + 1), delta, consts.q0)

    def build_v0(size):
        js = np.arange(size + 1)
        probs = np.zeros(size + 1)
        for t, w in enumerate(weights):
            probs += w * poisson.pmf(js, t * consts.mu0)
        return probs

    start0 = max(8, poisson_tail_cutoff(max(delta * consts.mu0, 1e-9), tol))
    law_v0 = _grow_until(build_v0, start0, tol, "V0plus-count law")

    def build_v1(size):
        if consts.mu1 <= 0:
            # q0 > 0 requires mu1 > 0; guard for degenerate constants
            probs = np.zeros(size + 1)
            probs[0] = 1.0
            return probs
        base = truncated_poisson_pmf(consts.mu1, jmax=size, tol=np.inf).probs
        probs = np.zeros(size + 1)
        probs[0] = weights[0]
        conv = np.array([1.0])
        for t in range(1, delta + 1):
            conv = np.convolve(conv, base)[:size + 1]
            probs += weights[t] * conv
        return probs

    start1 = max(8, delta + poisson_tail_cutoff(max(delta * consts.mu1, 1e-9), tol))
    law_v1 = _grow_until(build_v1, start1, tol, "V1plus-count law")
    return law_v0, law_v1


def pair_pmf(consts, shape=None, tol=DEFAULT_TAIL_TOL):
    """Joint law of one surviving test's (uninfected, infected) other-member
    counts at an infected root: independent Po(mu0) x Po(mu1) conditioned on
    a positive total.
    """
    if consts.mu0 + consts.mu1 <= 0:
        raise ValueError("pair law undefined: mu0 + mu1 must be positive")
    if shape is None:
        # conditioning divides by 1 - e^-(mu0+mu1), inflating truncation loss
        factor_tol = tol * -math.expm1(-(consts.mu0 + consts.mu1)) / 4.0
        j0 = poisson_tail_cutoff(max(consts.mu0, 1e-9), factor_tol)
        j1 = poisson_tail_cutoff(max(consts.mu1, 1e-9), factor_tol)
        shape = (j0 + 1, j1 + 1)
    a = poisson.pmf(np.arange(shape[0]), consts.mu0)
    b = poisson.pmf(np.arange(shape[1]), consts.mu1)
    probs = np.outer(a, b)
    probs[0, 0] = 0.0
    probs /= -math.expm1(-(consts.mu0 + consts.mu1))
    return OffspringPMF(probs=probs, tail_mass=float(1.0 - probs.sum()))


def pair_convolutions(consts, tmax, shape, tol=DEFAULT_TAIL_TOL):
    """t-fold 2-D convolutions of the pair law, t = 0..tmax, clipped to shape."""
    base = pair_pmf(consts, shape=shape, tol=tol).probs
    out = []
    conv = np.zeros(shape)
    conv[0, 0] = 1.0
    out.append(conv)
    for _ in range(tmax):
        prev = out[-1]
        nxt = np.zeros(shape)
        # direct-summation 2-D convolution over the tiny truncated supports
        for j in range(shape[0]):
            for k in range(shape[1]):
                if base[j, k] == 0.0:
                    continue
                nxt[j:, k:] += base[j, k] * prev[:shape[0] - j, :shape[1] - k]
        out.append(nxt)
    return out


def pmf_v1plus_offspring_joint(consts, delta=None, tol=DEFAULT_TAIL_TOL):
    """Joint second-neighbour law for an infected non-hard root.

    Binomial(delta, clamped q1) mixture of t-fold convolutions of the pair
    law.  Requires mu0 + mu1 > 0.
    """
    if delta is None:
        delta = consts.delta
    if consts.mu0 + consts.mu1 <= 0:
        raise ValueError("joint law undefined: mu0 + mu1 must be positive")
    q = consts.q1_clamped
    weights = binom.pmf(np.arange(delta + 1), delta, q)
    j0 = poisson_tail_cutoff(max(delta * consts.mu0, 1e-9), tol / 2) + delta
    j1 = poisson_tail_cutoff(max(delta * consts.mu1, 1e-9), tol / 2) + delta
    shape = (j0 + 1, j1 + 1)
    while True:
        convs = pair_convolutions(consts, delta, shape, tol)
        probs = np.zeros(shape)
        for t, w in enumerate(weights):
            probs += w * convs[t]
        tail = float(1.0 - probs.sum())
        if tail <= tol:
            return OffspringPMF(probs=probs, tail_mass=tail)
        if max(shape) > MAX_CUTOFF:
            raise TruncationError(f"joint law: tail {tail:.3g} above {tol}")
        shape = (2 * shape[0], 2 * shape[1])


def _sample_ztp(rng, mu, size):
    """Zero-truncated Poisson draws by inverse CDF on (e^-mu, 1)."""
    lo = math.exp(-mu)
    u = lo + rng.random(size) * (1.0 - lo)
    return poisson.ppf(u, mu).astype(np.int64)


def sample_offspring(consts, delta, root_type, seed, size=None):
    """Exact draws from the compound offspring law of the given root type.

    Per test slot: Bernoulli survival (q0 or clamped q1), then the
    per-surviving-test member counts.  Returns a single ``(v0, v1)`` pair,
    or an ``(size, 2)`` array when ``size`` is given.
    """
    rng = np.random.default_rng(seed)
    n = 1 if size is None else int(size)
    if root_type == V0PLUS:
        t = rng.binomial(delta, consts.q0, size=n)
        v0 = rng.poisson(t * consts.mu0)
        total = int(t.sum())
        if consts.mu1 > 0 and total:
            flat = _sample_ztp(rng, consts.mu1, total)
            owner = np.repeat(np.arange(n), t)
            v1 = np.bincount(owner, weights=flat, minlength=n).astype(np.int64)
        else:
            v1 = np.zeros(n, dtype=np.int64)
    elif root_type == V1PLUS:
        mu = consts.mu0 + consts.mu1
        if mu <= 0:
            raise ValueError("pair law undefined: mu0 + mu1 must be positive")
        t = rng.binomial(delta, consts.q1_clamped, size=n)
        total = int(t.sum())
        if total:
            # total per surviving test is ZTP(mu0 + mu1); split binomially
            tot = _sample_ztp(rng, mu, total)
            a = rng.binomial(tot, consts.mu0 / mu)
            owner = np.repeat(np.arange(n), t)
            v0 = np.bincount(owner, weights=a, minlength=n).astype(np.int64)
            v1 = np.bincount(owner, weights=tot - a, minlength=n).astype(np.int64)
        else:
            v0 = np.zeros(n, dtype=np.int64)
            v1 = np.zeros(n, dtype=np.int64)
    else:
        raise ValueError(f"unknown root type {root_type!r}")
    if size is None:
        return int(v0[0]), int(v1[0])
    return np.column_stack([v0, v1])
