"""Random regular test designs for pooled group testing.

A population of n individuals, k of which are infected, is assigned to m
pooled tests.  Every individual joins exactly ``delta`` distinct tests chosen
uniformly at random, so test sizes fluctuate.  A test is positive iff it
contains at least one infected member.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Params:
    """Problem parameters and the derived integer quantities.

    n         population size
    lam       infection density, k = round(lam * n)
    d         design density (dimensionless)
    delta     tests per individual
    k, m, c   derived: infected count, test count m = round(delta*lam*n/d),
              and test rate c = m / n
    """

    n: int
    lam: float
    d: float
    delta: int
    k: int
    m: int
    c: float


def derive_params(n, lam, d, delta):
    """Validate user parameters and derive (k, m, c).

    delta is kept integral and the rounding is absorbed into m, so the
    identity delta = c*d/lam holds exactly only when delta*lam*n/d is an
    integer.
    """
    n = int(n)
    delta = int(delta)
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if not (0.0 < lam < 1.0):
        raise ValueError(f"lambda must lie in (0, 1), got {lam}")
    if d <= 0.0:
        raise ValueError(f"d must be positive, got {d}")
    if delta < 1:
        raise ValueError(f"delta must be >= 1, got {delta}")
    k = int(round(lam * n))
    if k < 1:
        raise ValueError(f"derived infected count k = {k} < 1; increase lambda or n")
    if k >= n:
        raise ValueError(f"derived infected count k = {k} >= n = {n}")
    m = int(round(delta * lam * n / d))
    if m < delta:
        raise ValueError(f"derived test count m = {m} < delta = {delta}")
    return Params(n=n, lam=float(lam), d=float(d), delta=delta, k=k, m=m, c=m / n)


@dataclass(frozen=True)
class Configuration:
    """Ground-truth infection indicators, exactly k entries set."""

    sigma: np.ndarray  # shape (n,), uint8

    @property
    def n(self):
        return self.sigma.shape[0]

    @property
    def v0(self):
        """Indices of uninfected individuals."""
        return np.flatnonzero(self.sigma == 0)

    @property
    def v1(self):
        """Indices of infected individuals."""
        return np.flatnonzero(self.sigma == 1)

    @property
    def k(self):
        return int(self.sigma.sum())


def sample_configuration(params, seed):
    """Uniformly random size-k infected subset, deterministic given seed."""
    rng = np.random.default_rng(seed)
    sigma = np.zeros(params.n, dtype=np.uint8)
    infected = rng.choice(params.n, size=params.k, replace=False)
    sigma[infected] = 1
    return Configuration(sigma=sigma)


@dataclass(frozen=True)
class BipartiteDesign:
    """Individual-test incidence with fixed individual degree delta.

    tests_of[x] holds the delta distinct tests of individual x.  The inverse
    adjacency is stored in CSR form: members of test a are
    test_members[test_offsets[a]:test_offsets[a + 1]].
    """

    n: int
    m: int
    delta: int
    tests_of: np.ndarray       # (n, delta) int64
    test_offsets: np.ndarray   # (m + 1,) int64
    test_members: np.ndarray   # (n * delta,) int64

    @property
    def test_degrees(self):
        """Per-test member counts (fluctuating; zero-size tests allowed)."""
        return np.diff(self.test_offsets)

    def members_of(self, a):
        return self.test_members[self.test_offsets[a]:self.test_offsets[a + 1]]


def _build_inverse(n, m, delta, tests_of):
    flat = tests_of.ravel()
    order = np.argsort(flat, kind="stable")
    members = np.repeat(np.arange(n, dtype=np.int64), delta)[order]
    offsets = np.zeros(m + 1, dtype=np.int64)
    np.cumsum(np.bincount(flat, minlength=m), out=offsets[1:])
    return offsets, members


def sample_design(params, seed):
    """Assign each individual a uniform delta-subset of the m tests.

    Deterministic given seed.  Uses rejection of rows with repeated tests,
    which is cheap when m >> delta^2; dense designs fall back to per-row
    permutations.
    """
    n, m, delta = params.n, params.m, params.delta
    rng = np.random.default_rng(seed)
    if m <= max(64, 4 * delta * delta):
        # dense regime: argsort of iid uniforms = uniform permutation per row
        tests_of = np.argsort(rng.random((n, m)), axis=1)[:, :delta].astype(np.int64)
    else:
        tests_of = rng.integers(0, m, size=(n, delta), dtype=np.int64)
        while True:
            srt = np.sort(tests_of, axis=1)
            bad = (srt[:, 1:] == srt[:, :-1]).any(axis=1)
            if not bad.any():
                break
            tests_of[bad] = rng.integers(0, m, size=(int(bad.sum()), delta), dtype=np.int64)
    offsets, members = _build_inverse(n, m, delta, tests_of)
    return BipartiteDesign(n=n, m=m, delta=delta, tests_of=tests_of,
                           test_offsets=offsets, test_members=members)


@dataclass(frozen=True)
class Outcomes:
    """Per-test binary results; a test with no members is negative."""

    sigma_hat: np.ndarray  # (m,) uint8

    @property
    def positive(self):
        return self.sigma_hat.astype(bool)

    @property
    def m(self):
        return self.sigma_hat.shape[0]


def compute_outcomes(design, config):
    """OR of member infection indicators per test."""
    positive = np.zeros(design.m, dtype=bool)
    infected = config.v1
    if infected.size:
        positive[design.tests_of[infected].ravel()] = True
    return Outcomes(sigma_hat=positive.astype(np.uint8))


@dataclass(frozen=True)
class TestCompositionStats:
    """Histograms and moments of per-test infected/uninfected member counts."""

    infected_hist: np.ndarray    # counts of tests with j infected members
    uninfected_hist: np.ndarray
    mean_infected: float
    var_infected: float
    mean_uninfected: float
    var_uninfected: float
    mean_total: float


def test_composition_stats(design, config):
    """Summarize |test ∩ infected| and |test ∩ uninfected| over all tests."""
    infected = config.v1
    m = design.m
    inf_counts = np.bincount(design.tests_of[infected].ravel(), minlength=m)
    total_counts = np.asarray(design.test_degrees)
    uninf_counts = total_counts - inf_counts
    return TestCompositionStats(
        infected_hist=np.bincount(inf_counts),
        uninfected_hist=np.bincount(uninf_counts),
        mean_infected=float(inf_counts.mean()),
        var_infected=float(inf_counts.var()),
        mean_uninfected=float(uninf_counts.mean()),
        var_uninfected=float(uninf_counts.var()),
        mean_total=float(total_counts.mean()),
    )


def dump_edge_list(design, path):
    """Write the design as text: a header line, then one edge per line.

    Format: ``# n=<n> m=<m> delta=<delta>`` followed by
    ``individual_index test_index`` pairs.
    """
    with open(path, "w") as fh:
        fh.write(f"# n={design.n} m={design.m} delta={design.delta}\n")
        for x in range(design.n):
            for a in design.tests_of[x]:
                fh.write(f"{x} {a}\n")


def load_edge_list(path):
    """Read a design written by :func:`dump_edge_list`."""
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("#"):
            raise ValueError(f"missing header line in {path}")
        fields = dict(tok.split("=") for tok in header[1:].split())
        n, m, delta = int(fields["n"]), int(fields["m"]), int(fields["delta"])
        edges = np.loadtxt(fh, dtype=np.int64, ndmin=2)
    if edges.shape[0] != n * delta:
        raise ValueError(f"expected {n * delta} edges, found {edges.shape[0]}")
    tests_of = np.full((n, delta), -1, dtype=np.int64)
    fill = np.zeros(n, dtype=np.int64)
    for x, a in edges:
        tests_of[x, fill[x]] = a
        fill[x] += 1
    if (fill != delta).any():
        raise ValueError("some individual does not have exactly delta edges")
    offsets, members = _build_inverse(n, m, delta, tests_of)
    return BipartiteDesign(n=n, m=m, delta=delta, tests_of=tests_of,
                           test_offsets=offsets, test_members=members)
