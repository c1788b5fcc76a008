"""Descriptive statistics over the graph and learned relation vectors.

Three families of checks:

* target-profile overlap between drug pairs (Jaccard, histogrammed into
  three coarse strata for reporting),
* whether a side effect co-occurs with others across drug combinations
  more or less often than a cardinality-preserving random reassignment
  of label sets would produce,
* two-sample Kolmogorov-Smirnov comparisons, including the check that a
  side effect sits closer to its frequent co-occurrers in the learned
  relation space than to randomly drawn ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import kolmogorov

from .errors import ArgumentError, GraphLookupError
from .graph import TARGET_RELATION_ID, MultimodalGraph, NodeKind, NodeRef

STRATA = ("zero", "below_half", "at_least_half")
PAIR_SOURCES = ("random_pairs", "combo_pairs", "combo_pairs_with")
TOP_RELATIONS = 50


def jaccard(set_a, set_b) -> float:
    """|A ∩ B| / |A ∪ B|, taking two empty sets as fully disjoint (0)."""
    a, b = set(set_a), set(set_b)
    union = a | b
    if not union:
        return 0.0
    return len(a & b) / len(union)


def target_jaccard(graph: MultimodalGraph, drug_i: int, drug_j: int) -> float:
    """Overlap of two drugs' protein-target sets."""
    rel = graph.relation(TARGET_RELATION_ID)
    ti = graph.neighbors(NodeRef(NodeKind.DRUG, drug_i), rel)
    tj = graph.neighbors(NodeRef(NodeKind.DRUG, drug_j), rel)
    return jaccard(ti.tolist(), tj.tolist())


def strata_counts(values) -> dict:
    """Counts per overlap stratum: exactly zero, (0, 0.5), and [0.5, 1]."""
    out = {name: 0 for name in STRATA}
    for v in values:
        if not 0.0 <= v <= 1.0:
            raise ArgumentError(f"jaccard values live in [0, 1], got {v}")
        if v == 0.0:
            out["zero"] += 1
        elif v < 0.5:
            out["below_half"] += 1
        else:
            out["at_least_half"] += 1
    return out


def _combo_pairs(graph: MultimodalGraph) -> list:
    pairs = set()
    for rel in graph.side_effect_relations():
        pairs.update((int(i), int(j)) for i, j in graph.edges(rel))
    return sorted(pairs)


def jaccard_strata(graph: MultimodalGraph, pair_source: str = "combo_pairs",
                   relation_id: str | None = None, n_random: int | None = None,
                   seed: int = 0) -> dict:
    """Fraction of drug pairs per target-overlap stratum.

    ``pair_source`` picks which pairs enter the histogram: every pair that
    carries at least one side effect (``combo_pairs``), the pairs of one
    relation (``combo_pairs_with`` + ``relation_id``), or uniformly random
    distinct drug pairs (``random_pairs``; ``n_random`` defaults to the
    combo-pair count so the scales match).
    """
    if pair_source not in PAIR_SOURCES:
        raise ArgumentError(f"pair_source must be one of {PAIR_SOURCES}, got {pair_source!r}")
    if graph.edge_count(graph.relation(TARGET_RELATION_ID)) == 0:
        raise ArgumentError("no drug-target edges; overlap strata are undefined")
    if pair_source == "combo_pairs":
        pairs = _combo_pairs(graph)
    elif pair_source == "combo_pairs_with":
        if relation_id is None:
            raise ArgumentError("combo_pairs_with needs relation_id")
        rel = graph.relation(relation_id)
        pairs = [(int(i), int(j)) for i, j in graph.edges(rel)]
    else:
        count = len(_combo_pairs(graph)) if n_random is None else int(n_random)
        n = graph.n_drugs
        space = n * (n - 1) // 2
        if count < 1 or count > space:
            raise ArgumentError(f"cannot draw {count} distinct pairs from {space}")
        rng = np.random.default_rng(seed)
        flat = rng.choice(space, size=count, replace=False)
        # decode upper-triangle index k -> (i, j) against exact row offsets
        row_starts = np.cumsum(np.concatenate([[0], np.arange(n - 1, 0, -1)]))[:-1]
        i = np.searchsorted(row_starts, flat, side="right") - 1
        j = flat - row_starts[i] + i + 1
        pairs = list(zip(i.tolist(), j.tolist()))
    if not pairs:
        raise ArgumentError(f"pair source {pair_source!r} produced no pairs")
    counts = strata_counts(target_jaccard(graph, i, j) for i, j in pairs)
    total = len(pairs)
    return {name: counts[name] / total for name in STRATA}


# -- Kolmogorov-Smirnov ------------------------------------------------------


@dataclass(frozen=True)
class KsResult:
    statistic: float
    p_value: float
    n1: int
    n2: int


def ks_2sample(sample_a, sample_b) -> KsResult:
    """Two-sample KS test with the asymptotic Kolmogorov p-value.

    D is the maximum gap between the two empirical CDFs; the p-value is
    Q_KS(D * sqrt(n m / (n + m))).
    """
    a = np.sort(np.asarray(sample_a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(sample_b, dtype=np.float64).ravel())
    n, m = a.size, b.size
    if n == 0 or m == 0:
        raise ArgumentError("ks_2sample needs non-empty samples")
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / n
    cdf_b = np.searchsorted(b, grid, side="right") / m
    d = float(np.abs(cdf_a - cdf_b).max())
    effective = n * m / (n + m)
    p = float(kolmogorov(d * np.sqrt(effective)))
    return KsResult(statistic=d, p_value=p, n1=n, n2=m)


# -- co-occurrence permutation test ------------------------------------------


class CooccurrenceTable:
    """Which side effects each labeled drug pair was recorded with.

    ``count(r, s)`` is the number of drug pairs carrying both labels;
    ``count(r, r)`` is r's total.  The permutation null reassigns each
    relation's label set to a uniform random subset of the labeled pairs
    with the same cardinality.
    """

    def __init__(self, memberships, universe):
        self.universe = tuple(universe)
        self._column = {rid: k for k, rid in enumerate(self.universe)}
        self.matrix = np.zeros((len(memberships), len(self.universe)), dtype=bool)
        for row, items in enumerate(memberships):
            for rid in items:
                try:
                    self.matrix[row, self._column[rid]] = True
                except KeyError:
                    raise ArgumentError(f"{rid!r} is not in the declared universe") from None

    @classmethod
    def from_graph(cls, graph: MultimodalGraph) -> "CooccurrenceTable":
        universe = [r.relation_id for r in graph.side_effect_relations()]
        by_pair: dict[tuple, set] = {}
        for rel in graph.side_effect_relations():
            for i, j in graph.edges(rel):
                by_pair.setdefault((int(i), int(j)), set()).add(rel.relation_id)
        memberships = [by_pair[key] for key in sorted(by_pair)]
        return cls(memberships, universe)

    @property
    def n_combinations(self) -> int:
        return self.matrix.shape[0]

    def column(self, relation_id: str) -> int:
        try:
            return self._column[relation_id]
        except KeyError:
            raise GraphLookupError(f"relation {relation_id!r} not in the table") from None

    def total(self, relation_id: str) -> int:
        return int(self.matrix[:, self.column(relation_id)].sum())

    def count(self, first: str, second: str) -> int:
        a, b = self.column(first), self.column(second)
        return int((self.matrix[:, a] & self.matrix[:, b]).sum())

    def top_relations(self, k: int = TOP_RELATIONS, exclude=()) -> list:
        """The k most frequent relations, ties broken by id ascending."""
        skip = set(exclude)
        ranked = sorted((rid for rid in self.universe if rid not in skip),
                        key=lambda rid: (-self.total(rid), rid))
        return ranked[:k]


@dataclass(frozen=True)
class CooccurrenceFinding:
    first: str
    second: str
    observed: int
    null_mean: float
    p_value: float
    verdict: str


def cooccurrence_test(table: CooccurrenceTable, focus: str, others=None,
                      n_permutations: int = 1000, alpha: float = 0.05,
                      seed: int = 0) -> list:
    """Does ``focus`` co-occur with each other side effect more or less
    often than chance?

    The null keeps every relation's label-set size but redraws its members
    uniformly from the labeled drug pairs; each permutation uses its own
    derived seed so the draws aggregate deterministically in any order.
    p-values are two-sided around the permutation mean with add-one
    smoothing, (b + 1)/(n + 1).  Verdicts apply a Bonferroni threshold of
    alpha over the number of tested pairs: ``over``, ``under``, or
    ``insignificant``.
    """
    if n_permutations < 100:
        raise ArgumentError("n_permutations below 100 cannot resolve verdicts")
    focus_col = table.column(focus)
    if others is None:
        others = table.top_relations(TOP_RELATIONS, exclude=(focus,))
    else:
        others = [rid for rid in others if rid != focus]
    if not others:
        raise ArgumentError("no relations to test against")
    other_cols = np.array([table.column(rid) for rid in others])
    cols = np.concatenate([[focus_col], other_cols])
    totals = table.matrix[:, cols].sum(axis=0)
    n_rows = table.n_combinations
    if n_rows == 0:
        raise ArgumentError("empty co-occurrence table")

    observed = np.array([table.count(focus, rid) for rid in others], dtype=np.int64)
    perm_counts = np.empty((n_permutations, len(others)), dtype=np.int64)
    for t in range(n_permutations):
        rng = np.random.default_rng(np.random.SeedSequence((seed, t)))
        # Ranking iid uniforms per column draws a uniform fixed-size subset.
        keys = rng.random((n_rows, cols.size))
        ranks = keys.argsort(axis=0).argsort(axis=0)
        fake = (ranks < totals[None, :]).astype(np.int64)
        perm_counts[t] = fake[:, 0] @ fake[:, 1:]
    center = perm_counts.mean(axis=0)
    b = (np.abs(perm_counts - center) >= np.abs(observed - center)).sum(axis=0)
    p_values = (b + 1) / (n_permutations + 1)
    threshold = alpha / len(others)
    findings = []
    for idx, rid in enumerate(others):
        if p_values[idx] <= threshold and observed[idx] != center[idx]:
            verdict = "over" if observed[idx] > center[idx] else "under"
        else:
            verdict = "insignificant"
        findings.append(CooccurrenceFinding(
            first=focus, second=rid, observed=int(observed[idx]),
            null_mean=float(center[idx]), p_value=float(p_values[idx]),
            verdict=verdict,
        ))
    return findings


# -- learned-vector geometry ---------------------------------------------------


def cooccurrence_distance_samples(d_vectors: dict, table: CooccurrenceTable,
                                  k: int = 3, seed: int = 0):
    """Per-relation mean distances to top-k co-occurrers vs k random peers.

    Ties in co-occurrence counts break by relation id ascending; the random
    peers are drawn uniformly without replacement, excluding the relation
    itself.
    """
    rids = sorted(d_vectors)
    if k < 1:
        raise ArgumentError("k must be positive")
    if len(rids) < k + 1:
        raise ArgumentError(f"need at least {k + 1} relations for k={k}")
    vectors = {rid: np.asarray(d_vectors[rid], dtype=np.float64).ravel() for rid in rids}
    rng = np.random.default_rng(seed)
    top_means = np.empty(len(rids))
    random_means = np.empty(len(rids))
    for pos, rid in enumerate(rids):
        peers = [s for s in rids if s != rid]
        ranked = sorted(peers, key=lambda s: (-table.count(rid, s), s))
        top = ranked[:k]
        drawn = rng.choice(len(peers), size=k, replace=False)
        sampled = [peers[i] for i in drawn]
        v = vectors[rid]
        top_means[pos] = np.mean([np.linalg.norm(v - vectors[s]) for s in top])
        random_means[pos] = np.mean([np.linalg.norm(v - vectors[s]) for s in sampled])
    return top_means, random_means


def embedding_cooccurrence_distance(d_vectors: dict, table: CooccurrenceTable,
                                    k: int = 3, seed: int = 0) -> KsResult:
    """KS test between the two distance samples of
    :func:`cooccurrence_distance_samples`; a large statistic means relations
    sit closer to their frequent co-occurrers than to random ones."""
    top_means, random_means = cooccurrence_distance_samples(d_vectors, table, k, seed)
    return ks_2sample(top_means, random_means)
