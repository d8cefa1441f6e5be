"""Monte Carlo measurement of the quantities the analytic module predicts.

Each trial samples a full instance (configuration, design, outcomes), runs
the classification and reduction, and then records, for every non-hard
individual, the per-type counts of its second neighbours inside the reduced
graph.  Counts are per-test sums: an individual sharing two surviving tests
with the root is counted twice, matching the limit object.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import analytic
from .design import compute_outcomes, sample_configuration, sample_design
from .reduction import _classify_masks
from .stats import wilson_ci

SEED_SCHEME = "numpy SeedSequence((seed, trial_index)) -> spawn(config, design)"

DEPENDENCE_NOTE = (
    "Wilson intervals treat pooled per-root observations as independent; "
    "roots within one graph share tests, so the effective sample size is "
    "somewhat smaller than the nominal count."
)


@dataclass(frozen=True)
class ScalarEstimate:
    point: float
    ci_low: float
    ci_high: float
    successes: int
    trials: int

    def to_dict(self):
        return {"point": self.point, "ci_low": self.ci_low, "ci_high": self.ci_high,
                "successes": self.successes, "trials": self.trials}


@dataclass
class OffspringHistogram:
    """Joint counts of (uninfected, infected) second-neighbour totals.

    ``by_survivors[t, j, k]`` additionally splits the roots by their number
    of surviving adjacent tests t; ``counts`` is its sum over t.
    """

    root_type: str
    counts: np.ndarray        # (J0+1, J1+1) int64
    n_roots: int
    by_survivors: np.ndarray  # (delta+1, J0+1, J1+1) int64

    def normalized(self):
        return self.counts / self.counts.sum()

    def marginal_counts(self, axis):
        """Counts of the uninfected (axis 0) or infected (axis 1) coordinate."""
        return self.counts.sum(axis=1 - axis)

    def survivor_counts(self):
        """Number of roots per surviving-test count t."""
        return self.by_survivors.sum(axis=(1, 2))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["root_type", "v0plus_count", "v1plus_count", "frequency"])
            for j in range(self.counts.shape[0]):
                for k in range(self.counts.shape[1]):
                    c = int(self.counts[j, k])
                    if c:
                        writer.writerow([self.root_type, j, k, c])


@dataclass
class EstimateReport:
    """Point estimates, intervals and metadata for one measurement run."""

    params: object
    trials: int
    seed: int
    z: float
    estimates: dict
    empty_reduced_trials: int
    analytic_reference: dict
    seed_scheme: str = SEED_SCHEME
    note: str = DEPENDENCE_NOTE
    partition_rows: list = field(default_factory=list)

    def to_dict(self):
        p = self.params
        return {
            "params": {"n": p.n, "lambda": p.lam, "d": p.d, "delta": p.delta,
                       "k": p.k, "m": p.m, "c": p.c},
            "trials": self.trials,
            "seed": self.seed,
            "seed_scheme": self.seed_scheme,
            "z": self.z,
            "estimates": {k: v.to_dict() for k, v in self.estimates.items()},
            "empty_reduced_trials": self.empty_reduced_trials,
            "analytic_reference": self.analytic_reference,
            "note": self.note,
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def trial_seed_sequence(seed, trial):
    return np.random.SeedSequence((int(seed), int(trial)))


@dataclass(frozen=True)
class TrialResult:
    counts: dict                 # partition sizes and q/p tallies
    hist_v0: np.ndarray | None   # (delta+1, J0, J1) int64
    hist_v1: np.ndarray | None


def run_trial(params, seed, trial, want_offspring=True):
    """One full instance: sample, classify, reduce, tally offspring."""
    cfg_ss, des_ss = trial_seed_sequence(seed, trial).spawn(2)
    config = sample_configuration(params, cfg_ss)
    design = sample_design(params, des_ss)
    outcomes = compute_outcomes(design, config)
    v0m, v0p, v1m, v1p = _classify_masks(design, config, outcomes)

    m = design.m
    pos = outcomes.positive
    test_has_v1minus = np.zeros(m, dtype=bool)
    v1m_idx = np.flatnonzero(v1m)
    if v1m_idx.size:
        test_has_v1minus[design.tests_of[v1m_idx].ravel()] = True
    surviving_test = pos & ~test_has_v1minus

    flat_tests = design.tests_of.ravel()
    rep = lambda mask: np.repeat(mask, design.delta).astype(np.float64)
    cnt_v0p = np.bincount(flat_tests, weights=rep(v0p), minlength=m).astype(np.int64)
    cnt_v1p = np.bincount(flat_tests, weights=rep(v1p), minlength=m).astype(np.int64)

    S = surviving_test[design.tests_of]
    surv_count = S.sum(axis=1)
    v0_off = (cnt_v0p[design.tests_of] * S).sum(axis=1) - surv_count * v0p
    v1_off = (cnt_v1p[design.tests_of] * S).sum(axis=1) - surv_count * v1p

    # each surviving test at an uninfected root must contribute an infected
    # member other than the root
    assert (v1_off[v0p] >= surv_count[v0p]).all()

    counts = {
        "v0minus": int(v0m.sum()), "v0plus": int(v0p.sum()),
        "v1minus": int(v1m.sum()), "v1plus": int(v1p.sum()),
        "surviving_tests": int(surviving_test.sum()),
        "q0_num": int(surv_count[v0p].sum()), "q0_den": int(v0p.sum()) * design.delta,
        "q1_num": int(surv_count[v1p].sum()), "q1_den": int(v1p.sum()) * design.delta,
    }

    hist_v0 = hist_v1 = None
    if want_offspring:
        hist_v0 = _pack_hist(surv_count[v0p], v0_off[v0p], v1_off[v0p], params.delta)
        hist_v1 = _pack_hist(surv_count[v1p], v0_off[v1p], v1_off[v1p], params.delta)
    return TrialResult(counts=counts, hist_v0=hist_v0, hist_v1=hist_v1)


def _pack_hist(t, v0, v1, delta):
    if t.size == 0:
        return np.zeros((delta + 1, 1, 1), dtype=np.int64)
    k0 = int(v0.max()) + 1
    k1 = int(v1.max()) + 1
    flat = (t * k0 + v0) * k1 + v1
    dense = np.bincount(flat, minlength=(delta + 1) * k0 * k1)
    return dense.reshape(delta + 1, k0, k1).astype(np.int64)


def _merge_hists(hists):
    k0 = max(h.shape[1] for h in hists)
    k1 = max(h.shape[2] for h in hists)
    out = np.zeros((hists[0].shape[0], k0, k1), dtype=np.int64)
    for h in hists:
        out[:, :h.shape[1], :h.shape[2]] += h
    return out


def _trial_star(args):
    return run_trial(*args)


def _run_all_trials(params, trials, seed, want_offspring, workers):
    args = [(params, seed, t, want_offspring) for t in range(trials)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_trial_star, args, chunksize=max(1, trials // (4 * workers))))
    return [run_trial(*a) for a in args]


def _assemble_report(params, trials, seed, results, z):
    tot = {}
    for r in results:
        for key, value in r.counts.items():
            tot[key] = tot.get(key, 0) + value
    empty = sum(1 for r in results
                if r.counts["v0plus"] + r.counts["v1plus"] == 0)

    def est(num, den):
        if den == 0:
            return ScalarEstimate(point=float("nan"), ci_low=0.0, ci_high=1.0,
                                  successes=0, trials=0)
        lo, hi = wilson_ci(num, den, z)
        return ScalarEstimate(point=num / den, ci_low=lo, ci_high=hi,
                              successes=num, trials=den)

    n_uninf = params.n - params.k
    estimates = {
        "p0": est(tot["v0plus"], n_uninf * trials),
        "p1": est(tot["v1plus"], params.k * trials),
        "q0": est(tot["q0_num"], tot["q0_den"]),
        "q1": est(tot["q1_num"], tot["q1_den"]),
    }
    consts = analytic.constants(params.d, params.lam, params.delta)
    q1_hat = estimates["q1"].point
    reference = {
        "p0": consts.p0_delta, "p1": consts.p1_delta, "q0": consts.q0,
        "q1_raw": consts.q1_raw, "q1_in_range": consts.q1_in_range,
        "q1_clamped": consts.q1_clamped,
        "q1_discrepancy": abs(q1_hat - consts.q1_clamped)
                          if q1_hat == q1_hat else float("nan"),
        "mu0": consts.mu0, "mu1": consts.mu1,
    }
    rows = [(t, r.counts["v0minus"], r.counts["v0plus"], r.counts["v1minus"],
             r.counts["v1plus"], r.counts["surviving_tests"])
            for t, r in enumerate(results)]
    return EstimateReport(params=params, trials=trials, seed=seed, z=z,
                          estimates=estimates, empty_reduced_trials=empty,
                          analytic_reference=reference, partition_rows=rows)


def estimate_scalars(params, trials, seed, z=3.0, workers=1):
    """Pooled estimates of p0, p1, q0, q1 with Wilson intervals."""
    results = _run_all_trials(params, trials, seed, False, workers)
    return _assemble_report(params, trials, seed, results, z)


def measure_offspring(params, trials, seed, z=3.0, workers=1):
    """Offspring histograms for both root types plus the scalar report.

    Returns ``(hist_v0plus_roots, hist_v1plus_roots, report)``.
    """
    results = _run_all_trials(params, trials, seed, True, workers)
    report = _assemble_report(params, trials, seed, results, z)
    by_surv_v0 = _merge_hists([r.hist_v0 for r in results])
    by_surv_v1 = _merge_hists([r.hist_v1 for r in results])
    hist_v0 = OffspringHistogram(root_type=analytic.V0PLUS,
                                 counts=by_surv_v0.sum(axis=0),
                                 n_roots=int(by_surv_v0.sum()),
                                 by_survivors=by_surv_v0)
    hist_v1 = OffspringHistogram(root_type=analytic.V1PLUS,
                                 counts=by_surv_v1.sum(axis=0),
                                 n_roots=int(by_surv_v1.sum()),
                                 by_survivors=by_surv_v1)
    return hist_v0, hist_v1, report


def write_partition_csv(report, path):
    """Per-trial partition sizes as CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "v0minus", "v0plus", "v1minus", "v1plus",
                         "surviving_tests"])
        writer.writerows(report.partition_rows)
