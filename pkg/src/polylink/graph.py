"""Immutable typed multimodal graph and reproducible edge splitting.

Two node kinds (drugs, proteins) and three relation families:

* ``ppi``        protein-protein, undirected
* ``target``     drug-protein, directed drug -> protein
* side effects   one undirected drug-drug relation per retained side effect

Undirected edges are stored in both adjacency lists but kept in one
canonical orientation (lower index first) for splitting and evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .errors import ArgumentError, GraphLookupError, SplitError
from .validation import check_fractions, check_non_negative_int

PPI_RELATION_ID = "ppi"
TARGET_RELATION_ID = "target"


class NodeKind(Enum):
    DRUG = "drug"
    PROTEIN = "protein"


class RelationFamily(Enum):
    PROTEIN_PROTEIN = "protein_protein"
    DRUG_TARGET = "drug_target"
    SIDE_EFFECT = "side_effect"


@dataclass(frozen=True)
class NodeRef:
    kind: NodeKind
    index: int


@dataclass(frozen=True)
class RelationRef:
    family: RelationFamily
    side_effect_id: str | None = None

    def __post_init__(self):
        if (self.family is RelationFamily.SIDE_EFFECT) != (self.side_effect_id is not None):
            raise ArgumentError("side_effect_id is required exactly for side-effect relations")

    @property
    def symmetric(self) -> bool:
        return self.family is not RelationFamily.DRUG_TARGET

    @property
    def relation_id(self) -> str:
        if self.family is RelationFamily.PROTEIN_PROTEIN:
            return PPI_RELATION_ID
        if self.family is RelationFamily.DRUG_TARGET:
            return TARGET_RELATION_ID
        return self.side_effect_id

    def endpoint_kinds(self) -> tuple[NodeKind, NodeKind]:
        if self.family is RelationFamily.PROTEIN_PROTEIN:
            return (NodeKind.PROTEIN, NodeKind.PROTEIN)
        if self.family is RelationFamily.DRUG_TARGET:
            return (NodeKind.DRUG, NodeKind.PROTEIN)
        return (NodeKind.DRUG, NodeKind.DRUG)


@dataclass(frozen=True)
class BuildIssue:
    source: str
    record: tuple
    reason: str


@dataclass(frozen=True)
class BuildReport:
    duplicates: dict
    rejected: tuple
    relations_dropped: tuple
    features_removed: tuple


class MultimodalGraph:
    """Typed node registries, per-relation adjacency, and feature matrices.

    Construction goes through :func:`build_graph`; instances are immutable
    afterwards and safe to share across workers.
    """

    def __init__(self, drug_ids, protein_ids, relations, edges, drug_features,
                 drug_feature_names, build_report=None):
        self.drug_ids = tuple(drug_ids)
        self.protein_ids = tuple(protein_ids)
        self.relations = tuple(relations)
        self._relation_index = {r.relation_id: i for i, r in enumerate(self.relations)}
        # canonical edge arrays, one (m, 2) int64 array per relation
        self._edges = []
        for rel in self.relations:
            arr = np.asarray(edges[rel.relation_id], dtype=np.int64).reshape(-1, 2)
            if arr.size:
                arr = arr[np.lexsort((arr[:, 1], arr[:, 0]))]
            arr.flags.writeable = False
            self._edges.append(arr)
        self._adjacency = [self._build_adjacency(rel, arr) for rel, arr in zip(self.relations, self._edges)]
        if drug_features is not None:
            drug_features = sp.csr_matrix(drug_features, dtype=np.float64)
        self._drug_features = drug_features
        self.drug_feature_names = tuple(drug_feature_names) if drug_feature_names else tuple()
        self.build_report = build_report

    # -- registry ------------------------------------------------------

    @property
    def n_drugs(self) -> int:
        return len(self.drug_ids)

    @property
    def n_proteins(self) -> int:
        return len(self.protein_ids)

    def n_nodes(self, kind: NodeKind) -> int:
        return self.n_drugs if kind is NodeKind.DRUG else self.n_proteins

    def node_ids(self, kind: NodeKind) -> tuple:
        return self.drug_ids if kind is NodeKind.DRUG else self.protein_ids

    def relation(self, relation_id: str) -> RelationRef:
        try:
            return self.relations[self._relation_index[relation_id]]
        except KeyError:
            raise GraphLookupError(f"unknown relation {relation_id!r}") from None

    def relation_position(self, relation: RelationRef) -> int:
        try:
            return self._relation_index[relation.relation_id]
        except KeyError:
            raise GraphLookupError(f"unknown relation {relation.relation_id!r}") from None

    def side_effect_relations(self) -> list[RelationRef]:
        return [r for r in self.relations if r.family is RelationFamily.SIDE_EFFECT]

    # -- features --------------------------------------------------------

    @property
    def drug_feature_width(self) -> int:
        """Width of drug inputs; one-hot identity when no features were given."""
        return self._drug_features.shape[1] if self._drug_features is not None else self.n_drugs

    @property
    def protein_feature_width(self) -> int:
        return self.n_proteins

    def feature_matrix(self, kind: NodeKind) -> sp.csr_matrix:
        """Sparse input features; identity (one-hot rows) when none were given."""
        if kind is NodeKind.DRUG and self._drug_features is not None:
            return self._drug_features
        return sp.identity(self.n_nodes(kind), dtype=np.float64, format="csr")

    def has_explicit_features(self, kind: NodeKind) -> bool:
        return kind is NodeKind.DRUG and self._drug_features is not None

    # -- adjacency -------------------------------------------------------

    def _build_adjacency(self, rel: RelationRef, arr: np.ndarray):
        kind_a, kind_b = rel.endpoint_kinds()
        sides = {}
        if rel.symmetric:
            nbrs = [[] for _ in range(self.n_nodes(kind_a))]
            for i, j in arr:
                nbrs[i].append(j)
                nbrs[j].append(i)
            sides[kind_a] = _freeze_lists(nbrs)
        else:
            fwd = [[] for _ in range(self.n_nodes(kind_a))]
            rev = [[] for _ in range(self.n_nodes(kind_b))]
            for i, j in arr:
                fwd[i].append(j)
                rev[j].append(i)
            sides[kind_a] = _freeze_lists(fwd)
            sides[kind_b] = _freeze_lists(rev)
        return sides

    def edges(self, relation: RelationRef) -> np.ndarray:
        """Canonical edge array (m, 2), lexicographically sorted."""
        return self._edges[self.relation_position(relation)]

    def edge_count(self, relation: RelationRef) -> int:
        return self.edges(relation).shape[0]

    def neighbors(self, node: NodeRef, relation: RelationRef) -> np.ndarray:
        """Sorted neighbor indices of ``node`` under ``relation``.

        Empty when the node kind cannot participate in the relation.
        """
        if node.index < 0 or node.index >= self.n_nodes(node.kind):
            raise GraphLookupError(f"unknown node {node}")
        sides = self._adjacency[self.relation_position(relation)]
        lists = sides.get(node.kind)
        if lists is None:
            return _EMPTY_INDEX
        return lists[node.index]

    def degree(self, node: NodeRef, relation: RelationRef) -> int:
        return len(self.neighbors(node, relation))

    def degree_array(self, kind: NodeKind, relation: RelationRef) -> np.ndarray:
        """Degrees of every node of ``kind`` under ``relation`` (zeros if inert)."""
        sides = self._adjacency[self.relation_position(relation)]
        lists = sides.get(kind)
        if lists is None:
            return np.zeros(self.n_nodes(kind), dtype=np.int64)
        return np.array([len(x) for x in lists], dtype=np.int64)


_EMPTY_INDEX = np.empty(0, dtype=np.int64)
_EMPTY_INDEX.flags.writeable = False


def _freeze_lists(lists):
    out = []
    for values in lists:
        arr = np.array(sorted(values), dtype=np.int64)
        arr.flags.writeable = False
        out.append(arr)
    return out


def degree(graph: MultimodalGraph, node: NodeRef, relation: RelationRef) -> int:
    """Neighbor count of ``node`` under ``relation``."""
    return graph.degree(node, relation)


class _Registry:
    """First-seen-order assignment of dense indices to external ids."""

    def __init__(self):
        self.index = {}
        self.ids = []

    def get(self, external_id: str) -> int:
        idx = self.index.get(external_id)
        if idx is None:
            idx = len(self.ids)
            self.index[external_id] = idx
            self.ids.append(external_id)
        return idx


def build_graph(ppi_edges, target_edges, combo_edges, mono_features,
                min_relation_count: int = 0) -> MultimodalGraph:
    """Assemble a graph from raw record sequences.

    ``ppi_edges``: (protein, protein) pairs. ``target_edges``: (drug, protein)
    pairs. ``combo_edges``: (drug, drug, side_effect_id) triples.
    ``mono_features``: (drug, feature_id) pairs giving binary drug features.

    Side-effect relations backed by fewer than ``min_relation_count`` distinct
    drug pairs are dropped, and any drug feature whose id matches a retained
    side effect is removed so labels cannot leak into the inputs.  Duplicate
    records are deduplicated silently; self-pairs in undirected relations are
    rejected into the build report.
    """
    check_non_negative_int(min_relation_count, "min_relation_count")
    drugs = _Registry()
    proteins = _Registry()
    rejected: list[BuildIssue] = []
    duplicates = {"ppi": 0, "target": 0, "combo": 0, "mono": 0}

    ppi_set: set[tuple[int, int]] = set()
    for rec in ppi_edges:
        a, b = _clean_pair(rec, "ppi", rejected)
        if a is None:
            continue
        ia, ib = proteins.get(a), proteins.get(b)
        if ia == ib:
            rejected.append(BuildIssue("ppi", tuple(rec), "self-pair in undirected relation"))
            continue
        key = (min(ia, ib), max(ia, ib))
        if key in ppi_set:
            duplicates["ppi"] += 1
        else:
            ppi_set.add(key)

    target_set: set[tuple[int, int]] = set()
    for rec in target_edges:
        d, p = _clean_pair(rec, "target", rejected)
        if d is None:
            continue
        key = (drugs.get(d), proteins.get(p))
        if key in target_set:
            duplicates["target"] += 1
        else:
            target_set.add(key)

    combo_sets: dict[str, set[tuple[int, int]]] = {}
    combo_order: list[str] = []
    for rec in combo_edges:
        try:
            d1, d2, se = (str(x).strip() for x in rec[:3])
        except Exception:
            rejected.append(BuildIssue("combo", tuple(rec), "malformed record"))
            continue
        if not d1 or not d2 or not se:
            rejected.append(BuildIssue("combo", tuple(rec), "empty identifier"))
            continue
        i1, i2 = drugs.get(d1), drugs.get(d2)
        if i1 == i2:
            rejected.append(BuildIssue("combo", (d1, d2, se), "self-pair in undirected relation"))
            continue
        if se not in combo_sets:
            combo_sets[se] = set()
            combo_order.append(se)
        key = (min(i1, i2), max(i1, i2))
        if key in combo_sets[se]:
            duplicates["combo"] += 1
        else:
            combo_sets[se].add(key)

    mono_set: set[tuple[int, str]] = set()
    feature_order: list[str] = []
    for rec in mono_features:
        d, f = _clean_pair(rec, "mono", rejected)
        if d is None:
            continue
        key = (drugs.get(d), f)
        if key in mono_set:
            duplicates["mono"] += 1
        else:
            mono_set.add(key)
            if f not in feature_order:
                feature_order.append(f)

    retained = [se for se in combo_order if len(combo_sets[se]) >= min_relation_count]
    dropped = tuple(se for se in combo_order if se not in set(retained))

    # leakage guard: a drug feature that names a retained side effect is removed
    retained_set = set(retained)
    features_removed = tuple(f for f in feature_order if f in retained_set)
    feature_names = [f for f in feature_order if f not in retained_set]

    relations = [RelationRef(RelationFamily.PROTEIN_PROTEIN),
                 RelationRef(RelationFamily.DRUG_TARGET)]
    edges = {
        PPI_RELATION_ID: sorted(ppi_set),
        TARGET_RELATION_ID: sorted(target_set),
    }
    for se in retained:
        relations.append(RelationRef(RelationFamily.SIDE_EFFECT, se))
        edges[se] = sorted(combo_sets[se])

    drug_features = None
    if feature_names:
        col = {f: i for i, f in enumerate(feature_names)}
        rows, cols = [], []
        for d_idx, f in mono_set:
            c = col.get(f)
            if c is not None:
                rows.append(d_idx)
                cols.append(c)
        drug_features = sp.csr_matrix(
            (np.ones(len(rows)), (rows, cols)),
            shape=(len(drugs.ids), len(feature_names)),
        )
        drug_features.data = np.minimum(drug_features.data, 1.0)

    report = BuildReport(duplicates=duplicates, rejected=tuple(rejected),
                         relations_dropped=dropped, features_removed=features_removed)
    return MultimodalGraph(drugs.ids, proteins.ids, relations, edges,
                           drug_features, feature_names, build_report=report)


def _clean_pair(rec, source, rejected):
    try:
        a, b = (str(x).strip() for x in rec[:2])
    except Exception:
        rejected.append(BuildIssue(source, tuple(rec), "malformed record"))
        return None, None
    if not a or not b:
        rejected.append(BuildIssue(source, tuple(rec), "empty identifier"))
        return None, None
    return a, b


@dataclass
class EdgeSplit:
    """Frozen per-relation train/val/test positives plus sampled negatives.

    Negatives have the same cardinality as the matching positive fold, never
    collide with any positive of the same relation, and are fixed at split
    time so that every model is measured against the same evaluation sets.
    """

    seed: int
    train_pos: dict = field(default_factory=dict)
    val_pos: dict = field(default_factory=dict)
    test_pos: dict = field(default_factory=dict)
    val_neg: dict = field(default_factory=dict)
    test_neg: dict = field(default_factory=dict)

    def positives(self, fold: str, relation_id: str) -> np.ndarray:
        return {"train": self.train_pos, "val": self.val_pos, "test": self.test_pos}[fold][relation_id]

    def negatives(self, fold: str, relation_id: str) -> np.ndarray:
        return {"val": self.val_neg, "test": self.test_neg}[fold][relation_id]


def split_edges(graph: MultimodalGraph, fractions=(0.8, 0.1, 0.1), seed: int = 0) -> EdgeSplit:
    """Shuffle each relation's canonical edges and split train/val/test.

    Val and test each take floor(fraction * m) edges with a minimum of one;
    the remainder trains.  Evaluation negatives are sampled uniformly over
    admissible pairs of the relation's endpoint kinds, rejecting self-pairs
    and every positive of the relation.  Deterministic per seed.
    """
    fr = check_fractions(fractions)
    split = EdgeSplit(seed=int(seed))
    for pos, rel in enumerate(graph.relations):
        arr = graph.edges(rel)
        m = arr.shape[0]
        rid = rel.relation_id
        if m == 0:
            # inert relation: nothing to split or evaluate
            empty = np.empty((0, 2), dtype=np.int64)
            split.train_pos[rid] = empty
            split.val_pos[rid] = empty
            split.test_pos[rid] = empty
            split.val_neg[rid] = empty
            split.test_neg[rid] = empty
            continue
        if m < 3:
            raise SplitError(f"relation {rid!r} has only {m} edges; need at least 3 to split")
        rng = np.random.default_rng(np.random.SeedSequence((seed, pos)))
        order = rng.permutation(m)
        n_val = max(1, int(fr[1] * m))
        n_test = max(1, int(fr[2] * m))
        shuffled = arr[order]
        split.val_pos[rid] = _frozen(shuffled[:n_val])
        split.test_pos[rid] = _frozen(shuffled[n_val:n_val + n_test])
        split.train_pos[rid] = _frozen(shuffled[n_val + n_test:])
        positives = {(int(i), int(j)) for i, j in arr}
        split.val_neg[rid] = _sample_negatives(graph, rel, positives, n_val, rng)
        split.test_neg[rid] = _sample_negatives(graph, rel, positives, n_test, rng)
    return split


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


def _sample_negatives(graph, rel, positives, count, rng) -> np.ndarray:
    kind_a, kind_b = rel.endpoint_kinds()
    n_a, n_b = graph.n_nodes(kind_a), graph.n_nodes(kind_b)
    if rel.symmetric:
        space = n_a * (n_a - 1) // 2
    else:
        space = n_a * n_b
    if space - len(positives) < count:
        raise SplitError(
            f"relation {rel.relation_id!r}: cannot sample {count} negatives "
            f"from {space - len(positives)} admissible non-edges"
        )
    out = []
    seen = set()
    while len(out) < count:
        i = int(rng.integers(n_a))
        j = int(rng.integers(n_b))
        if rel.symmetric:
            if i == j:
                continue
            i, j = (i, j) if i < j else (j, i)
        key = (i, j)
        if key in positives or key in seen:
            continue
        seen.add(key)
        out.append(key)
    return _frozen(np.array(out, dtype=np.int64))


def split_manifest_rows(graph: MultimodalGraph, split: EdgeSplit):
    """Yield manifest rows (relation_id, drug_i, drug_j, fold, label)."""
    for rel in graph.relations:
        kind_a, kind_b = rel.endpoint_kinds()
        ids_a, ids_b = graph.node_ids(kind_a), graph.node_ids(kind_b)
        rid = rel.relation_id
        for fold, table in (("train", split.train_pos), ("val", split.val_pos), ("test", split.test_pos)):
            for i, j in table[rid]:
                yield (rid, ids_a[i], ids_b[j], fold, "pos")
        for fold, table in (("val", split.val_neg), ("test", split.test_neg)):
            for i, j in table[rid]:
                yield (rid, ids_a[i], ids_b[j], fold, "neg")
