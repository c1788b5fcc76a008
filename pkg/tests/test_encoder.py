import numpy as np
import pytest

from polylink.autodiff import Tape, Tensor
from polylink.encoder import (
    build_channels,
    channel_specs,
    encode,
    init_encoder_params,
    normalization_constants,
)
from polylink.errors import ArgumentError
from polylink.graph import NodeKind, build_graph
from polylink.optim import ParamStore

PPI = [("P0", "P1"), ("P1", "P2"), ("P0", "P2"), ("P2", "P3")]
TARGETS = [("D0", "P0"), ("D0", "P1"), ("D1", "P2"), ("D2", "P3"), ("D3", "P0")]
COMBOS = [
    ("D0", "D1", "seA"), ("D1", "D2", "seA"), ("D0", "D2", "seA"),
    ("D0", "D3", "seB"), ("D1", "D3", "seB"), ("D2", "D3", "seB"),
]
MONO = [("D0", "f0"), ("D1", "f0"), ("D1", "f1"), ("D2", "f1"), ("D3", "f2")]


def toy_graph(with_features=True):
    return build_graph(PPI, TARGETS, COMBOS, MONO if with_features else [])


def dense_reference(graph, store, hidden_dims, final_activation=True):
    """Brute-force forward pass with dense numpy and explicit loops."""

    def degrees(edges, n_a, n_b, symmetric):
        da = np.zeros(n_a)
        db = np.zeros(n_b)
        for i, j in edges:
            da[i] += 1
            db[j] += 1
        if symmetric:
            total = da + db
            return total, total
        return da, db

    def norm_dense(rel, dst_kind):
        edges = graph.edges(rel)
        ka, kb = rel.endpoint_kinds()
        na, nb = graph.n_nodes(ka), graph.n_nodes(kb)
        da, db = degrees(edges, na, nb, rel.symmetric)
        if rel.symmetric:
            out = np.zeros((na, na))
            for i, j in edges:
                out[i, j] = 1.0 / np.sqrt(da[i] * da[j])
                out[j, i] = out[i, j]
            return out
        fwd = np.zeros((na, nb))
        for i, j in edges:
            fwd[i, j] = 1.0 / np.sqrt(da[i] * db[j])
        return fwd.T if dst_kind is kb else fwd

    feats = {k: graph.feature_matrix(k).toarray() for k in (NodeKind.DRUG, NodeKind.PROTEIN)}
    state = dict(feats)
    n_layers = len(hidden_dims)
    for k in range(n_layers):
        nxt = {}
        for kind in (NodeKind.DRUG, NodeKind.PROTEIN):
            nxt[kind] = state[kind] @ store[f"enc/self/{kind.value}/{k}"].values
        for rel in graph.relations:
            if graph.edge_count(rel) == 0:
                continue
            ka, kb = rel.endpoint_kinds()
            if rel.symmetric:
                w = store[f"enc/w/{rel.relation_id}/{k}"].values
                nxt[ka] = nxt[ka] + norm_dense(rel, ka) @ (state[ka] @ w)
            else:
                w_fwd = store[f"enc/w/{rel.relation_id}/fwd/{k}"].values
                w_rev = store[f"enc/w/{rel.relation_id}/rev/{k}"].values
                nxt[kb] = nxt[kb] + norm_dense(rel, kb) @ (state[ka] @ w_fwd)
                nxt[ka] = nxt[ka] + norm_dense(rel, ka) @ (state[kb] @ w_rev)
        for kind in nxt:
            if k < n_layers - 1 or final_activation:
                nxt[kind] = np.maximum(nxt[kind], 0.0)
        state = nxt
    return state


class TestNormalizationConstants:
    def test_symmetric_hand_computed(self):
        g = build_graph([("P0", "P1"), ("P1", "P2"), ("P0", "P2"), ("P2", "P3")], [], [], [])
        rel = g.relation("ppi")
        a = normalization_constants(g, rel, NodeKind.PROTEIN).to_dense()
        # degrees: P0=2, P1=2, P2=3, P3=1
        np.testing.assert_allclose(a[0, 1], 1 / np.sqrt(4))
        np.testing.assert_allclose(a[1, 2], 1 / np.sqrt(6))
        np.testing.assert_allclose(a[2, 3], 1 / np.sqrt(3))
        np.testing.assert_array_equal(a, a.T)
        assert a[0, 3] == 0.0

    def test_asymmetric_directions_are_transposes(self):
        g = toy_graph()
        rel = g.relation("target")
        into_p = normalization_constants(g, rel, NodeKind.PROTEIN).to_dense()
        into_d = normalization_constants(g, rel, NodeKind.DRUG).to_dense()
        np.testing.assert_array_equal(into_p, into_d.T)
        # D0 targets two proteins, P0 is targeted by two drugs
        d0 = g.drug_ids.index("D0")
        p0 = g.protein_ids.index("P0")
        np.testing.assert_allclose(into_p[p0, d0], 1 / np.sqrt(4))

    def test_restricted_edge_set(self):
        g = toy_graph()
        rel = g.relation("seA")
        sub = g.edges(rel)[:1]
        a = normalization_constants(g, rel, NodeKind.DRUG, edges=sub).to_dense()
        i, j = sub[0]
        np.testing.assert_allclose(a[i, j], 1.0)  # both degrees are 1
        assert a.sum() == 2.0

    def test_wrong_kind_rejected(self):
        g = toy_graph()
        with pytest.raises(ArgumentError):
            normalization_constants(g, g.relation("ppi"), NodeKind.DRUG)


class TestChannels:
    def test_spec_inventory(self):
        g = toy_graph()
        specs = channel_specs(g)
        ids = [s.channel_id for s in specs]
        assert ids == ["ppi", "target/fwd", "target/rev", "seA", "seB"]

    def test_zero_edge_relations_skipped(self):
        g = toy_graph()
        empty = np.empty((0, 2), dtype=np.int64)
        channels = build_channels(g, {"seA": empty})
        ids = [c.spec.channel_id for c in channels]
        assert "seA" not in ids
        assert "seB" in ids and "ppi" in ids

    def test_adjacency_shapes(self):
        g = toy_graph()
        for ch in build_channels(g):
            n_dst = g.n_nodes(ch.spec.dst)
            n_src = g.n_nodes(ch.spec.src)
            assert ch.adjacency.shape == (n_dst, n_src)


class TestInitParams:
    def test_manifest_independent_of_edges(self):
        g = toy_graph()
        s1, s2 = ParamStore(), ParamStore()
        init_encoder_params(g, [8, 4], seed=0, store=s1)
        init_encoder_params(g, [8, 4], seed=0, store=s2)
        assert s1.names() == s2.names()
        # weights exist even for relations a split might empty out
        assert "enc/w/seA/0" in s1
        assert "enc/w/target/rev/1" in s1
        assert "enc/self/drug/0" in s1

    def test_shapes_follow_feature_widths(self):
        g = toy_graph()
        store = ParamStore()
        init_encoder_params(g, [8, 4], seed=0, store=store)
        assert store["enc/self/drug/0"].shape == (g.drug_feature_width, 8)
        assert store["enc/self/protein/0"].shape == (g.n_proteins, 8)
        assert store["enc/w/seA/1"].shape == (8, 4)
        assert store["enc/w/target/fwd/0"].shape == (g.drug_feature_width, 8)
        assert store["enc/w/target/rev/0"].shape == (g.n_proteins, 8)

    def test_requires_layers(self):
        g = toy_graph()
        with pytest.raises(ArgumentError):
            init_encoder_params(g, [], seed=0, store=ParamStore())


class TestEncodeForward:
    @pytest.mark.parametrize("with_features", [True, False])
    @pytest.mark.parametrize("final_activation", [True, False])
    def test_matches_dense_brute_force(self, with_features, final_activation):
        g = toy_graph(with_features)
        store = ParamStore()
        init_encoder_params(g, [7, 3], seed=11, store=store)
        out = encode(g, store, [7, 3], build_channels(g), final_activation=final_activation)
        ref = dense_reference(g, store, [7, 3], final_activation=final_activation)
        for kind in (NodeKind.DRUG, NodeKind.PROTEIN):
            np.testing.assert_allclose(out[kind].values, ref[kind], atol=1e-10)

    def test_output_shapes(self):
        g = toy_graph()
        store = ParamStore()
        init_encoder_params(g, [6, 2], seed=1, store=store)
        out = encode(g, store, [6, 2], build_channels(g))
        assert out[NodeKind.DRUG].shape == (g.n_drugs, 2)
        assert out[NodeKind.PROTEIN].shape == (g.n_proteins, 2)

    def test_final_activation_switch_allows_negatives(self):
        g = toy_graph()
        store = ParamStore()
        init_encoder_params(g, [6, 4], seed=2, store=store)
        raw = encode(g, store, [6, 4], build_channels(g), final_activation=False)
        assert (raw[NodeKind.DRUG].values < 0).any()
        relu = encode(g, store, [6, 4], build_channels(g), final_activation=True)
        assert (relu[NodeKind.DRUG].values >= 0).all()

    def test_channel_dropped_changes_output(self):
        g = toy_graph()
        store = ParamStore()
        init_encoder_params(g, [5], seed=3, store=store)
        full = encode(g, store, [5], build_channels(g))
        empty = np.empty((0, 2), dtype=np.int64)
        partial = encode(g, store, [5], build_channels(g, {"ppi": empty}))
        assert not np.allclose(full[NodeKind.PROTEIN].values, partial[NodeKind.PROTEIN].values)

    def test_dropout_deterministic_per_seed(self):
        g = toy_graph()
        store = ParamStore()
        init_encoder_params(g, [6, 4], seed=4, store=store)
        chans = build_channels(g)
        a = encode(g, store, [6, 4], chans, training=True, dropout_rate=0.3,
                   rng=np.random.default_rng(9))
        b = encode(g, store, [6, 4], chans, training=True, dropout_rate=0.3,
                   rng=np.random.default_rng(9))
        c = encode(g, store, [6, 4], chans, training=True, dropout_rate=0.3,
                   rng=np.random.default_rng(10))
        np.testing.assert_array_equal(a[NodeKind.DRUG].values, b[NodeKind.DRUG].values)
        assert not np.array_equal(a[NodeKind.DRUG].values, c[NodeKind.DRUG].values)

    def test_eval_mode_ignores_dropout(self):
        g = toy_graph()
        store = ParamStore()
        init_encoder_params(g, [5], seed=5, store=store)
        chans = build_channels(g)
        plain = encode(g, store, [5], chans)
        evalmode = encode(g, store, [5], chans, training=False, dropout_rate=0.5)
        np.testing.assert_array_equal(plain[NodeKind.DRUG].values, evalmode[NodeKind.DRUG].values)

    def test_training_dropout_requires_rng(self):
        g = toy_graph()
        store = ParamStore()
        init_encoder_params(g, [5], seed=6, store=store)
        with pytest.raises(ArgumentError):
            encode(g, store, [5], build_channels(g), training=True, dropout_rate=0.1)


class TestEncodeGradients:
    def test_gradient_matches_finite_differences(self):
        g = toy_graph()
        store = ParamStore()
        init_encoder_params(g, [5, 3], seed=7, store=store)
        chans = build_channels(g)
        names = store.names()

        def loss_value():
            tape = Tape(record=False)
            out = encode(g, store, [5, 3], chans, tape)
            total = 0.0
            for kind in (NodeKind.DRUG, NodeKind.PROTEIN):
                total += tape.sigmoid(out[kind]).values.sum()
            return total

        tape = Tape()
        out = encode(g, store, [5, 3], chans, tape)
        loss = tape.add(
            tape.sum_all(tape.sigmoid(out[NodeKind.DRUG])),
            tape.sum_all(tape.sigmoid(out[NodeKind.PROTEIN])),
        )
        tape.backward(loss)

        h = 1e-6
        rng = np.random.default_rng(0)
        for name in names:
            t = store[name]
            # probe three random entries per parameter
            for _ in range(3):
                r = rng.integers(t.shape[0])
                c = rng.integers(t.shape[1])
                orig = t.values[r, c]
                t.values[r, c] = orig + h
                up = loss_value()
                t.values[r, c] = orig - h
                down = loss_value()
                t.values[r, c] = orig
                fd = (up - down) / (2 * h)
                assert abs(t.grad[r, c] - fd) < 1e-5, name
