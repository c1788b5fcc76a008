"""Relational graph convolutions producing drug and protein embeddings.

Each layer aggregates, per relation channel, messages from neighbor states
through a relation-specific weight matrix, normalized by the symmetric
degree factor 1/sqrt(|N_i| |N_j|), plus an unnormalized self connection
through a per-kind weight, then applies an elementwise nonlinearity:

    h_dst = relu( sum_channels A_ch (drop(h_src) W_ch) + drop(h_dst) W_self )

First-layer inputs are the sparse node features (one-hot identity when a
kind has no features), so the first matmul acts as an embedding lookup and
no dense identity matrix is ever materialized.  Channels whose relation has
no edges in the active edge set are skipped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import SparseAdjacency, Tape, Tensor, sparse_dropout
from .errors import ArgumentError
from .graph import MultimodalGraph, NodeKind, RelationRef
from .optim import ParamStore, as_seed_sequence, glorot_init

KIND_ORDER = (NodeKind.DRUG, NodeKind.PROTEIN)


@dataclass(frozen=True)
class ChannelSpec:
    """One directed message pathway: relation plus a direction."""

    channel_id: str
    relation_id: str
    src: NodeKind
    dst: NodeKind


def channel_specs(graph: MultimodalGraph) -> list[ChannelSpec]:
    """Every message pathway the graph's relation set defines.

    Symmetric relations give one same-kind channel; the drug-target relation
    gives two directed channels with independent weights.
    """
    specs = []
    for rel in graph.relations:
        kind_a, kind_b = rel.endpoint_kinds()
        rid = rel.relation_id
        if rel.symmetric:
            specs.append(ChannelSpec(rid, rid, kind_a, kind_a))
        else:
            specs.append(ChannelSpec(f"{rid}/fwd", rid, kind_a, kind_b))
            specs.append(ChannelSpec(f"{rid}/rev", rid, kind_b, kind_a))
    return specs


def normalization_constants(graph: MultimodalGraph, relation: RelationRef,
                            dst_kind: NodeKind, edges: np.ndarray | None = None) -> SparseAdjacency:
    """Normalized message matrix (n_dst, n_src) for one relation direction.

    Entry (i, j) is 1/sqrt(deg(i) deg(j)) when j sends to i, with degrees
    taken under the same relation and edge set.  ``edges`` restricts the
    relation to a subset of its canonical edge array (the training fold);
    by default all edges count.
    """
    if edges is None:
        edges = graph.edges(relation)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    kind_a, kind_b = relation.endpoint_kinds()
    n_a, n_b = graph.n_nodes(kind_a), graph.n_nodes(kind_b)
    if relation.symmetric:
        if dst_kind is not kind_a:
            raise ArgumentError(f"relation {relation.relation_id!r} has no {dst_kind.value} side")
        deg = np.zeros(n_a, dtype=np.int64)
        np.add.at(deg, edges[:, 0], 1)
        np.add.at(deg, edges[:, 1], 1)
        rows = np.concatenate([edges[:, 0], edges[:, 1]])
        cols = np.concatenate([edges[:, 1], edges[:, 0]])
        coef = 1.0 / np.sqrt(deg[rows] * deg[cols])
        return SparseAdjacency.from_entries(rows, cols, coef, shape=(n_a, n_a))
    deg_a = np.zeros(n_a, dtype=np.int64)
    deg_b = np.zeros(n_b, dtype=np.int64)
    np.add.at(deg_a, edges[:, 0], 1)
    np.add.at(deg_b, edges[:, 1], 1)
    coef = 1.0 / np.sqrt(deg_a[edges[:, 0]] * deg_b[edges[:, 1]])
    if dst_kind is kind_b:
        return SparseAdjacency.from_entries(edges[:, 1], edges[:, 0], coef, shape=(n_b, n_a))
    return SparseAdjacency.from_entries(edges[:, 0], edges[:, 1], coef, shape=(n_a, n_b))


@dataclass(frozen=True)
class Channel:
    spec: ChannelSpec
    adjacency: SparseAdjacency


def build_channels(graph: MultimodalGraph, edge_sets: dict | None = None) -> list[Channel]:
    """Materialize normalized adjacencies for channels with at least one edge.

    ``edge_sets`` maps relation_id to an (m, 2) edge array; relations absent
    from the mapping fall back to the full graph.
    """
    channels = []
    for spec in channel_specs(graph):
        rel = graph.relation(spec.relation_id)
        edges = None
        if edge_sets is not None and spec.relation_id in edge_sets:
            edges = edge_sets[spec.relation_id]
        else:
            edges = graph.edges(rel)
        if np.asarray(edges).size == 0:
            continue
        adj = normalization_constants(graph, rel, spec.dst, edges)
        channels.append(Channel(spec, adj))
    return channels


def _input_width(graph: MultimodalGraph, kind: NodeKind) -> int:
    return graph.drug_feature_width if kind is NodeKind.DRUG else graph.protein_feature_width


def layer_dims(graph: MultimodalGraph, hidden_dims) -> list[dict]:
    """Per-layer (in_width_by_kind, out_width) table."""
    dims = []
    widths = {k: _input_width(graph, k) for k in KIND_ORDER}
    for d in hidden_dims:
        dims.append({"in": dict(widths), "out": int(d)})
        widths = {k: int(d) for k in KIND_ORDER}
    return dims


def init_encoder_params(graph: MultimodalGraph, hidden_dims, seed, store: ParamStore) -> None:
    """Create Glorot-initialized weights for every channel and layer.

    Weights exist for every relation in the graph, whether or not it has
    edges in the active split, so parameter manifests do not depend on the
    split.  Creation order (and the seed stream) is channel order then
    layer, followed by the per-kind self weights.
    """
    if not hidden_dims:
        raise ArgumentError("hidden_dims must name at least one layer width")
    dims = layer_dims(graph, hidden_dims)
    specs = channel_specs(graph)
    seeds = as_seed_sequence(seed).spawn(
        len(dims) * (len(specs) + len(KIND_ORDER))
    )
    cursor = 0
    for k, layer in enumerate(dims):
        for spec in specs:
            fan_in = layer["in"][spec.src]
            store.add(f"enc/w/{spec.channel_id}/{k}",
                      glorot_init(fan_in, layer["out"], seeds[cursor]))
            cursor += 1
        for kind in KIND_ORDER:
            store.add(f"enc/self/{kind.value}/{k}",
                      glorot_init(layer["in"][kind], layer["out"], seeds[cursor]))
            cursor += 1


def encode(graph: MultimodalGraph, store: ParamStore, hidden_dims,
           channels: list[Channel], tape: Tape | None = None, *,
           training: bool = False, dropout_rate: float = 0.0,
           rng: np.random.Generator | None = None,
           final_activation: bool = True) -> dict:
    """Run the convolution stack; returns a dense embedding Tensor per kind.

    Dropout is applied to every layer's inputs when ``training``: stored
    entries of the sparse features at layer one, whole hidden states after
    that, one mask per (layer, kind) shared by the self connection and all
    outgoing messages.
    """
    if training and dropout_rate > 0.0 and rng is None:
        raise ArgumentError("training-mode dropout needs an rng")
    if tape is None:
        tape = Tape(record=False)
    dims = layer_dims(graph, hidden_dims)
    use_dropout = training and dropout_rate > 0.0

    features = {}
    for kind in KIND_ORDER:
        feat = graph.feature_matrix(kind)
        if use_dropout:
            feat = sparse_dropout(feat, dropout_rate, rng)
        features[kind] = SparseAdjacency(feat)

    state: dict[NodeKind, Tensor] = {}
    for k, layer in enumerate(dims):
        if k == 0:
            def project(kind, weight):
                return tape.spmm(features[kind], weight)
        else:
            dropped = {}
            for kind in KIND_ORDER:
                h = state[kind]
                dropped[kind] = tape.dropout(h, dropout_rate, rng) if use_dropout else h

            def project(kind, weight):
                return tape.matmul(dropped[kind], weight)

        nxt = {}
        for kind in KIND_ORDER:
            nxt[kind] = project(kind, store[f"enc/self/{kind.value}/{k}"])
        for ch in channels:
            msg = tape.spmm(ch.adjacency, project(ch.spec.src, store[f"enc/w/{ch.spec.channel_id}/{k}"]))
            nxt[ch.spec.dst] = tape.add(nxt[ch.spec.dst], msg)
        last = k == len(dims) - 1
        for kind in KIND_ORDER:
            if not last or final_activation:
                nxt[kind] = tape.relu(nxt[kind])
        state = nxt
    return state
