"""Distribution-comparison and interval utilities for the validation suites."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

NORMALIZATION_TOL = 1e-6


@dataclass(frozen=True)
class ComparisonResult:
    tv_distance: float
    chi_square_stat: float
    chi_square_pvalue: float
    degrees_of_freedom: int


def _pad_common(p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.ndim != q.ndim:
        raise ValueError(f"dimension mismatch: {p.ndim} vs {q.ndim}")
    shape = tuple(max(a, b) for a, b in zip(p.shape, q.shape))
    pp = np.zeros(shape)
    qq = np.zeros(shape)
    pp[tuple(slice(0, s) for s in p.shape)] = p
    qq[tuple(slice(0, s) for s in q.shape)] = q
    return pp, qq


def tv_distance(p, q):
    """Half the L1 distance between two PMFs, supports unioned with zeros.

    Both inputs must sum to 1 within 1e-6.
    """
    p, q = _pad_common(p, q)
    for name, arr in (("p", p), ("q", q)):
        s = arr.sum()
        if abs(s - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"{name} is not normalized: sums to {s!r}")
    return float(0.5 * np.abs(p - q).sum())


def normalize_counts(counts):
    """Counts -> empirical PMF."""
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total <= 0:
        raise ValueError("cannot normalize empty counts")
    return counts / total


def chi_square_gof(observed, expected):
    """Pearson goodness-of-fit of observed counts against an expected PMF.

    Bivariate inputs are flattened to a common support.  Every bin whose
    expected count falls below 5 is pooled into a single bin; degrees of
    freedom are (#final bins - 1).  When everything pools into one bin the
    dof is 0 and the p-value is reported as 1.
    """
    observed, expected = _pad_common(observed, expected)
    observed = observed.ravel()
    expected = expected.ravel()
    total = observed.sum()
    if total < 1:
        raise ValueError("need at least one observation")
    es = expected.sum()
    if abs(es - 1.0) > NORMALIZATION_TOL:
        raise ValueError(f"expected PMF is not normalized: sums to {es!r}")
    expected = expected / es
    exp_counts = expected * total

    small = exp_counts < 5.0
    obs_bins = list(observed[~small])
    exp_bins = list(exp_counts[~small])
    if small.any():
        obs_bins.append(observed[small].sum())
        exp_bins.append(exp_counts[small].sum())
    obs_bins = np.asarray(obs_bins)
    exp_bins = np.asarray(exp_bins)

    dof = len(obs_bins) - 1
    if dof <= 0:
        stat = 0.0 if exp_bins[0] > 0 else math.inf
        tv = tv_distance(observed / total, expected)
        return ComparisonResult(tv_distance=tv, chi_square_stat=float(stat),
                                chi_square_pvalue=1.0, degrees_of_freedom=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = (obs_bins - exp_bins) ** 2 / exp_bins
    terms = np.where((exp_bins == 0) & (obs_bins == 0), 0.0, terms)
    stat = float(terms.sum())
    pvalue = float(chi2.sf(stat, dof)) if math.isfinite(stat) else 0.0
    tv = tv_distance(observed / total, expected)
    return ComparisonResult(tv_distance=tv, chi_square_stat=stat,
                            chi_square_pvalue=pvalue, degrees_of_freedom=dof)


def wilson_ci(successes, trials, z):
    """Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not (0 <= successes <= trials):
        raise ValueError(f"successes {successes} outside [0, {trials}]")
    phat = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (phat + z2 / (2.0 * trials)) / denom
    half = z * math.sqrt(phat * (1.0 - phat) / trials + z2 / (4.0 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)
