"""Hard/non-hard classification, COMP/DD decoding and graph reduction.

An uninfected individual appearing in a negative test is trivially
identified; an infected one that is the sole not-yet-cleared member of a
positive test is forced.  Removing both groups (and the tests they explain)
leaves the reduced graph on which inference is actually interesting.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np


class Label(IntEnum):
    DEFINITELY_UNINFECTED = 0
    DEFINITELY_INFECTED = 1
    UNRESOLVED = 2


@dataclass(frozen=True)
class TypePartition:
    """Disjoint split of all individuals by ground-truth type and hardness."""

    v0minus: np.ndarray  # uninfected, in >= 1 negative test
    v0plus: np.ndarray   # uninfected, all tests positive
    v1minus: np.ndarray  # infected, forced by some test
    v1plus: np.ndarray   # infected, not forced
    n: int

    def masks(self):
        out = []
        for idx in (self.v0minus, self.v0plus, self.v1minus, self.v1plus):
            mask = np.zeros(self.n, dtype=bool)
            mask[idx] = True
            out.append(mask)
        return tuple(out)


def _classify_masks(design, config, outcomes):
    """Boolean masks (v0minus, v0plus, v1minus, v1plus) without packing."""
    sigma = config.sigma.astype(bool)
    pos = outcomes.positive
    in_negative = (~pos)[design.tests_of].any(axis=1)
    v0minus = ~sigma & in_negative
    v0plus = ~sigma & ~in_negative
    # Per test, count members outside v0minus; a positive test whose only
    # such member is x itself forces x (all *other* members are cleared).
    alive = (~v0minus).astype(np.int64)
    per_test_alive = np.bincount(design.tests_of.ravel(),
                                 weights=np.repeat(alive, design.delta),
                                 minlength=design.m).astype(np.int64)
    forcing = pos & (per_test_alive == 1)
    v1minus = sigma & forcing[design.tests_of].any(axis=1)
    v1plus = sigma & ~v1minus
    return v0minus, v0plus, v1minus, v1plus


def classify(design, config, outcomes):
    """Partition individuals into the four hard/non-hard types."""
    v0m, v0p, v1m, v1p = _classify_masks(design, config, outcomes)
    return TypePartition(
        v0minus=np.flatnonzero(v0m),
        v0plus=np.flatnonzero(v0p),
        v1minus=np.flatnonzero(v1m),
        v1plus=np.flatnonzero(v1p),
        n=design.n,
    )


@dataclass(frozen=True)
class ReducedGraph:
    """Design restricted to non-hard individuals and unexplained tests.

    Individuals keep their original indices in ``individual_ids``; tests in
    ``test_ids``.  Adjacency is stored edge-wise over local (compacted)
    indices, CSR in both directions.  Individuals whose tests were all
    removed remain, with surviving degree 0.
    """

    individual_ids: np.ndarray
    test_ids: np.ndarray
    indiv_offsets: np.ndarray   # (n_surv + 1,)
    indiv_tests: np.ndarray     # local test index per edge, grouped by individual
    test_offsets: np.ndarray    # (t_surv + 1,)
    test_members: np.ndarray    # local individual index per edge, grouped by test

    @property
    def n_individuals(self):
        return self.individual_ids.shape[0]

    @property
    def n_tests(self):
        return self.test_ids.shape[0]

    @property
    def n_edges(self):
        return self.indiv_tests.shape[0]

    @property
    def degrees(self):
        return np.diff(self.indiv_offsets)

    def tests_of_local(self, x):
        return self.indiv_tests[self.indiv_offsets[x]:self.indiv_offsets[x + 1]]

    def members_of_local(self, a):
        return self.test_members[self.test_offsets[a]:self.test_offsets[a + 1]]

    @classmethod
    def from_edges(cls, n_individuals, n_tests, edges,
                   individual_ids=None, test_ids=None):
        """Build from explicit (individual, test) pairs in local indices."""
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if individual_ids is None:
            individual_ids = np.arange(n_individuals, dtype=np.int64)
        if test_ids is None:
            test_ids = np.arange(n_tests, dtype=np.int64)
        return _pack_reduced(np.asarray(individual_ids), np.asarray(test_ids),
                             edges[:, 0], edges[:, 1])


def _pack_reduced(individual_ids, test_ids, edge_x, edge_a):
    n_surv, t_surv = individual_ids.shape[0], test_ids.shape[0]
    order_x = np.argsort(edge_x, kind="stable")
    indiv_tests = edge_a[order_x]
    indiv_offsets = np.zeros(n_surv + 1, dtype=np.int64)
    np.cumsum(np.bincount(edge_x, minlength=n_surv), out=indiv_offsets[1:])
    order_a = np.argsort(edge_a, kind="stable")
    test_members = edge_x[order_a]
    test_offsets = np.zeros(t_surv + 1, dtype=np.int64)
    np.cumsum(np.bincount(edge_a, minlength=t_surv), out=test_offsets[1:])
    return ReducedGraph(individual_ids=individual_ids, test_ids=test_ids,
                        indiv_offsets=indiv_offsets, indiv_tests=indiv_tests,
                        test_offsets=test_offsets, test_members=test_members)


def build_reduced_graph(design, outcomes, partition, peel_to_fixpoint=False):
    """Apply the three removal steps and return the surviving graph.

    Steps, in order: drop negative tests and their members (v0minus), drop
    forced infected individuals (v1minus), drop every test adjacent to a
    v1minus member.  One pass is a fixed point for partitions produced by
    :func:`classify`; ``peel_to_fixpoint`` re-runs the peeling until nothing
    changes, for experimentation with iterated warning propagation.
    """
    n, m = design.n, design.m
    pos = outcomes.positive
    removed_indiv = np.zeros(n, dtype=bool)
    removed_indiv[partition.v0minus] = True
    removed_indiv[partition.v1minus] = True
    v1minus_mask = np.zeros(n, dtype=bool)
    v1minus_mask[partition.v1minus] = True
    test_has_v1minus = np.zeros(m, dtype=bool)
    if partition.v1minus.size:
        test_has_v1minus[design.tests_of[partition.v1minus].ravel()] = True
    surviving_test = pos & ~test_has_v1minus
    surviving_indiv = ~removed_indiv

    if peel_to_fixpoint:
        while True:
            # a surviving test whose members are all removed but one would
            # force that member; rerun the forcing rule on the current state
            alive = surviving_indiv.astype(np.int64)
            per_test_alive = np.bincount(
                design.tests_of.ravel(),
                weights=np.repeat(alive, design.delta),
                minlength=m).astype(np.int64)
            forcing = surviving_test & (per_test_alive == 1)
            newly_forced = surviving_indiv & forcing[design.tests_of].any(axis=1)
            if not newly_forced.any():
                break
            surviving_indiv &= ~newly_forced
            touched = np.zeros(m, dtype=bool)
            touched[design.tests_of[np.flatnonzero(newly_forced)].ravel()] = True
            surviving_test &= ~touched

    surv_x = np.flatnonzero(surviving_indiv)
    surv_a = np.flatnonzero(surviving_test)
    local_x = np.full(n, -1, dtype=np.int64)
    local_x[surv_x] = np.arange(surv_x.size)
    local_a = np.full(m, -1, dtype=np.int64)
    local_a[surv_a] = np.arange(surv_a.size)
    edge_x = np.repeat(np.arange(n, dtype=np.int64), design.delta)
    edge_a = design.tests_of.ravel()
    keep = surviving_indiv[edge_x] & surviving_test[edge_a]
    return _pack_reduced(surv_x, surv_a, local_x[edge_x[keep]], local_a[edge_a[keep]])


@dataclass(frozen=True)
class DecodeResult:
    """Per-individual decoder labels plus summary counts."""

    labels: np.ndarray  # (n,) int8 of Label values

    @property
    def declared_uninfected(self):
        return np.flatnonzero(self.labels == Label.DEFINITELY_UNINFECTED)

    @property
    def declared_infected(self):
        return np.flatnonzero(self.labels == Label.DEFINITELY_INFECTED)

    @property
    def unresolved(self):
        return np.flatnonzero(self.labels == Label.UNRESOLVED)

    @property
    def counts(self):
        return {
            "definitely_uninfected": int((self.labels == Label.DEFINITELY_UNINFECTED).sum()),
            "definitely_infected": int((self.labels == Label.DEFINITELY_INFECTED).sum()),
            "unresolved": int((self.labels == Label.UNRESOLVED).sum()),
        }


def comp_decode(design, outcomes):
    """COMP: anyone in a negative test is uninfected, everyone else infected."""
    in_negative = (~outcomes.positive)[design.tests_of].any(axis=1)
    labels = np.where(in_negative,
                      np.int8(Label.DEFINITELY_UNINFECTED),
                      np.int8(Label.DEFINITELY_INFECTED))
    return DecodeResult(labels=labels)


def dd_decode(design, outcomes, unresolved_as_uninfected=False):
    """DD: clear members of negative tests, then declare infected anyone who
    is then alone in some positive test.

    The remaining individuals are labeled unresolved; pass
    ``unresolved_as_uninfected=True`` for the classical DD output that
    declares them uninfected.
    """
    pos = outcomes.positive
    in_negative = (~pos)[design.tests_of].any(axis=1)
    alive = (~in_negative).astype(np.int64)
    per_test_alive = np.bincount(design.tests_of.ravel(),
                                 weights=np.repeat(alive, design.delta),
                                 minlength=design.m).astype(np.int64)
    forcing = pos & (per_test_alive == 1)
    forced = ~in_negative & forcing[design.tests_of].any(axis=1)
    labels = np.full(design.n, np.int8(Label.UNRESOLVED))
    labels[in_negative] = np.int8(Label.DEFINITELY_UNINFECTED)
    labels[forced] = np.int8(Label.DEFINITELY_INFECTED)
    if unresolved_as_uninfected:
        labels[labels == Label.UNRESOLVED] = np.int8(Label.DEFINITELY_UNINFECTED)
    return DecodeResult(labels=labels)


def partition_sizes_csv_row(trial, partition, reduced):
    """One CSV row of per-trial partition sizes (see header below)."""
    return (f"{trial},{partition.v0minus.size},{partition.v0plus.size},"
            f"{partition.v1minus.size},{partition.v1plus.size},{reduced.n_tests}")


PARTITION_CSV_HEADER = "trial,v0minus,v0plus,v1minus,v1plus,surviving_tests"
