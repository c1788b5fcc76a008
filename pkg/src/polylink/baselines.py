"""Tensor-factorization baselines over the drug-drug relations.

Both learn one free embedding row per drug (no message passing, no protein
information) and score pairs bilinearly:

* rescal     a_i^T T_r a_j      one full matrix per relation
* dedicom    a_i^T U_r T U_r a_j  shared core, per-relation diagonal U_r

Cores are symmetrized like the main decoder.  Training, negative sampling,
validation, and early stopping reuse the exact loop the graph model runs;
only the relation set (drug-drug only) and the parameterization differ.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tape, Tensor, stable_sigmoid
from .errors import ArgumentError, GraphLookupError
from .graph import EdgeSplit, MultimodalGraph, NodeKind, RelationRef
from .optim import ParamStore, as_seed_sequence, glorot_init
from .trainer import TrainConfig, TrainResult, train

FLAVORS = ("rescal", "dedicom")


class FactorModel:
    """Drop-in model adapter for the shared training loop."""

    def __init__(self, graph: MultimodalGraph, config: TrainConfig, flavor: str):
        if flavor not in FLAVORS:
            raise ArgumentError(f"flavor must be one of {FLAVORS}, got {flavor!r}")
        self.graph = graph
        self.dim = config.embedding_dim
        self.flavor = flavor
        self._relations = graph.side_effect_relations()

    def init_params(self, store: ParamStore, seed) -> None:
        n_seeds = 1 + (1 if self.flavor == "dedicom" else 0) + len(self._relations)
        seeds = iter(as_seed_sequence(seed).spawn(n_seeds))
        store.add("fac/A", glorot_init(self.graph.n_drugs, self.dim, next(seeds)))
        if self.flavor == "dedicom":
            store.add("fac/T", glorot_init(self.dim, self.dim, next(seeds)))
            for rel in self._relations:
                store.add(f"fac/U/{rel.relation_id}", glorot_init(1, self.dim, next(seeds)))
        else:
            for rel in self._relations:
                store.add(f"fac/T/{rel.relation_id}", glorot_init(self.dim, self.dim, next(seeds)))

    def train_relations(self) -> list[RelationRef]:
        return list(self._relations)

    def embeddings(self, store: ParamStore, tape: Tape, *, training: bool = False,
                   rng=None) -> dict:
        return {NodeKind.DRUG: store["fac/A"]}

    def logits(self, store, relation: RelationRef, embeddings, pairs, tape: Tape) -> Tensor:
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        a = embeddings[NodeKind.DRUG]
        gi = tape.gather_rows(a, pairs[:, 0])
        gj = tape.gather_rows(a, pairs[:, 1])
        if self.flavor == "rescal":
            core = store[f"fac/T/{relation.relation_id}"]
            sym = tape.affine(tape.add(core, tape.transpose(core)), alpha=0.5, beta=0.0)
            return tape.sum_rows(tape.mul(tape.matmul(gi, sym), gj))
        core = store["fac/T"]
        sym = tape.affine(tape.add(core, tape.transpose(core)), alpha=0.5, beta=0.0)
        diag = store[f"fac/U/{relation.relation_id}"]
        left = tape.matmul(tape.mul(gi, diag), sym)
        return tape.sum_rows(tape.mul(tape.mul(left, diag), gj))

    def effective_bilinear(self, store: ParamStore, relation: RelationRef) -> np.ndarray:
        if relation not in self._relations:
            raise GraphLookupError(
                f"factorization baselines only score drug-drug relations, "
                f"not {relation.relation_id!r}")
        if self.flavor == "rescal":
            core = store[f"fac/T/{relation.relation_id}"].values
            return (core + core.T) / 2.0
        core = store["fac/T"].values
        u = store[f"fac/U/{relation.relation_id}"].values[0]
        return ((core + core.T) / 2.0) * np.outer(u, u)

    def probabilities(self, store, relation, embeddings, pairs) -> np.ndarray:
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        a = embeddings[NodeKind.DRUG]
        values = a.values if isinstance(a, Tensor) else np.asarray(a)
        w = self.effective_bilinear(store, relation)
        logits = np.einsum("md,de,me->m", values[pairs[:, 0]], w, values[pairs[:, 1]])
        return stable_sigmoid(logits.reshape(1, -1))[0]


def train_baseline(graph: MultimodalGraph, split: EdgeSplit, config: TrainConfig,
                   seed: int = 0, flavor: str = "rescal", log_fn=None,
                   resume_from=None) -> TrainResult:
    """Fit a factorization baseline with the shared training loop."""
    model = FactorModel(graph, config.validated(), flavor)
    return train(graph, split, config, seed=seed, model=model, log_fn=log_fn,
                 resume_from=resume_from)
