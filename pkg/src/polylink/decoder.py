"""Bilinear edge scoring on top of the node embeddings.

Each relation family gets its own decoder form, all of them producing a
logit that a sigmoid turns into an edge probability:

* side effects    z_i^T D_r S D_r z_j   shared symmetric core S with a
                                        per-relation diagonal importance
                                        vector D_r
* protein links   z_i^T M z_j           relation-specific symmetric M
* drug targets    z_drug^T M z_prot     relation-specific M, oriented
                                        drug to protein

Matrices for the symmetric families are symmetrized as (M + M^T)/2 so the
score never depends on pair orientation.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .autodiff import Tape, Tensor, stable_sigmoid
from .errors import ArgumentError
from .graph import MultimodalGraph, NodeKind, RelationFamily, RelationRef
from .optim import ParamStore, as_seed_sequence, glorot_init

SHARED_CORE = "dec/R"


def init_decoder_params(graph: MultimodalGraph, dim: int, seed, store: ParamStore) -> None:
    """Glorot-initialized decoder weights for every relation in the graph."""
    if dim < 1:
        raise ArgumentError(f"embedding dim must be positive, got {dim}")
    side_effects = graph.side_effect_relations()
    seeds = iter(as_seed_sequence(seed).spawn(3 + len(side_effects)))
    store.add(SHARED_CORE, glorot_init(dim, dim, next(seeds)))
    store.add("dec/M/ppi", glorot_init(dim, dim, next(seeds)))
    store.add("dec/M/target", glorot_init(dim, dim, next(seeds)))
    for rel in side_effects:
        store.add(f"dec/D/{rel.relation_id}", glorot_init(1, dim, next(seeds)))


def endpoint_embeddings(relation: RelationRef, embeddings: dict):
    kind_a, kind_b = relation.endpoint_kinds()
    return embeddings[kind_a], embeddings[kind_b]


def pair_logits(store: ParamStore, relation: RelationRef, embeddings: dict,
                pairs: np.ndarray, tape: Tape) -> Tensor:
    """Logits for an (m, 2) index-pair array as an (m, 1) tensor on the tape."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    z_a, z_b = endpoint_embeddings(relation, embeddings)
    gi = tape.gather_rows(z_a, pairs[:, 0])
    gj = tape.gather_rows(z_b, pairs[:, 1])
    if relation.family is RelationFamily.SIDE_EFFECT:
        core = _symmetrized(tape, store[SHARED_CORE])
        diag = store[f"dec/D/{relation.relation_id}"]
        left = tape.matmul(tape.mul(gi, diag), core)
        return tape.sum_rows(tape.mul(tape.mul(left, diag), gj))
    if relation.family is RelationFamily.PROTEIN_PROTEIN:
        core = _symmetrized(tape, store["dec/M/ppi"])
    else:
        core = store["dec/M/target"]
    return tape.sum_rows(tape.mul(tape.matmul(gi, core), gj))


def _symmetrized(tape: Tape, m: Tensor) -> Tensor:
    return tape.affine(tape.add(m, tape.transpose(m)), alpha=0.5, beta=0.0)


def effective_bilinear(store: ParamStore, relation: RelationRef) -> np.ndarray:
    """Dense matrix W with logit(i, j) = z_i^T W z_j for the relation."""
    if relation.family is RelationFamily.SIDE_EFFECT:
        core = store[SHARED_CORE].values
        sym = (core + core.T) / 2.0
        d = store[f"dec/D/{relation.relation_id}"].values[0]
        return sym * np.outer(d, d)
    if relation.family is RelationFamily.PROTEIN_PROTEIN:
        core = store["dec/M/ppi"].values
        return (core + core.T) / 2.0
    return store["dec/M/target"].values


def pair_probabilities(store: ParamStore, relation: RelationRef, embeddings: dict,
                       pairs: np.ndarray) -> np.ndarray:
    """Sigmoid edge probabilities for index pairs, plain numpy, shape (m,)."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    z_a, z_b = endpoint_embeddings(relation, embeddings)
    za = z_a.values if isinstance(z_a, Tensor) else np.asarray(z_a)
    zb = z_b.values if isinstance(z_b, Tensor) else np.asarray(z_b)
    w = effective_bilinear(store, relation)
    logits = np.einsum("md,de,me->m", za[pairs[:, 0]], w, zb[pairs[:, 1]])
    return stable_sigmoid(logits.reshape(1, -1))[0]


@dataclass(frozen=True)
class EdgeScore:
    relation_id: str
    i: int
    j: int
    probability: float


def top_pairs(store: ParamStore, relation: RelationRef, embeddings: dict,
              k: int, exclude=None, chunk_rows: int = 256,
              bilinear_fn=None) -> list[EdgeScore]:
    """The k most probable admissible pairs, highest first.

    Admissible means i < j for symmetric relations and any (drug, protein)
    pair for targets, minus pairs listed in ``exclude``.  Streams row
    chunks so the full score matrix never materializes; ties are broken by
    ascending (i, j) so results do not depend on chunking.  ``bilinear_fn``
    swaps in another model's (store, relation) -> W mapping.
    """
    if k < 1:
        raise ArgumentError(f"top-k needs k >= 1, got {k}")
    z_a, z_b = endpoint_embeddings(relation, embeddings)
    za = z_a.values if isinstance(z_a, Tensor) else np.asarray(z_a)
    zb = z_b.values if isinstance(z_b, Tensor) else np.asarray(z_b)
    w = (bilinear_fn or effective_bilinear)(store, relation)
    excluded = {(int(i), int(j)) for i, j in exclude} if exclude is not None else set()
    n_a, n_b = za.shape[0], zb.shape[0]
    right = w @ zb.T
    # heap of (prob, neg_i, neg_j): the worst kept entry sits at the root,
    # and ties on prob prefer keeping the lexicographically smallest pair
    heap: list[tuple[float, int, int]] = []
    for start in range(0, n_a, chunk_rows):
        stop = min(start + chunk_rows, n_a)
        block = stable_sigmoid(za[start:stop] @ right)
        for local, i in enumerate(range(start, stop)):
            row = block[local]
            j_lo = i + 1 if relation.symmetric else 0
            for j in range(j_lo, n_b):
                if (i, j) in excluded:
                    continue
                entry = (float(row[j]), -i, -j)
                if len(heap) < k:
                    heapq.heappush(heap, entry)
                elif entry > heap[0]:
                    heapq.heapreplace(heap, entry)
    ordered = sorted(heap, key=lambda e: (-e[0], -e[1], -e[2]))
    return [EdgeScore(relation.relation_id, -ni, -nj, p) for p, ni, nj in ordered]
