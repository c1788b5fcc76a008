import numpy as np
import pytest

from polylink.autodiff import Tape, Tensor, stable_sigmoid
from polylink.decoder import (
    EdgeScore,
    effective_bilinear,
    init_decoder_params,
    pair_logits,
    pair_probabilities,
    top_pairs,
)
from polylink.errors import ArgumentError
from polylink.graph import NodeKind, build_graph
from polylink.optim import ParamStore


def tiny_graph():
    return build_graph(
        [("P0", "P1"), ("P1", "P2"), ("P0", "P2")],
        [("D0", "P0"), ("D1", "P1"), ("D2", "P2")],
        [
            ("D0", "D1", "seA"), ("D1", "D2", "seA"), ("D0", "D2", "seA"),
            ("D0", "D1", "seB"), ("D1", "D3", "seB"), ("D0", "D3", "seB"),
        ],
        [],
    )


def loop_logit(relation, store, zi, zj):
    """Explicit triple-loop bilinear form, the independent oracle."""
    d = len(zi)
    if relation.relation_id == "target":
        w = [[store["dec/M/target"].values[a][b] for b in range(d)] for a in range(d)]
        diag = [1.0] * d
    elif relation.relation_id == "ppi":
        m = store["dec/M/ppi"].values
        w = [[0.5 * (m[a][b] + m[b][a]) for b in range(d)] for a in range(d)]
        diag = [1.0] * d
    else:
        m = store["dec/R"].values
        w = [[0.5 * (m[a][b] + m[b][a]) for b in range(d)] for a in range(d)]
        diag = list(store[f"dec/D/{relation.relation_id}"].values[0])
    total = 0.0
    for a in range(d):
        for b in range(d):
            total += zi[a] * diag[a] * w[a][b] * diag[b] * zj[b]
    return total


@pytest.fixture
def setup():
    g = tiny_graph()
    store = ParamStore()
    dim = 5
    init_decoder_params(g, dim, seed=21, store=store)
    rng = np.random.default_rng(3)
    emb = {
        NodeKind.DRUG: Tensor(rng.normal(size=(g.n_drugs, dim)), requires_grad=True),
        NodeKind.PROTEIN: Tensor(rng.normal(size=(g.n_proteins, dim)), requires_grad=True),
    }
    return g, store, emb


class TestParams:
    def test_inventory(self, setup):
        g, store, _ = setup
        names = set(store.names())
        assert names == {"dec/R", "dec/M/ppi", "dec/M/target", "dec/D/seA", "dec/D/seB"}
        assert store["dec/D/seA"].shape == (1, 5)

    def test_bad_dim(self):
        with pytest.raises(ArgumentError):
            init_decoder_params(tiny_graph(), 0, seed=0, store=ParamStore())


class TestAgainstLoopOracle:
    @pytest.mark.parametrize("rid", ["seA", "seB", "ppi", "target"])
    def test_tape_logits_match(self, setup, rid):
        g, store, emb = setup
        rel = g.relation(rid)
        ka, kb = rel.endpoint_kinds()
        n_a, n_b = g.n_nodes(ka), g.n_nodes(kb)
        pairs = np.array([(i, j) for i in range(n_a) for j in range(n_b)])
        tape = Tape(record=False)
        got = pair_logits(store, rel, emb, pairs, tape).values[:, 0]
        want = [
            loop_logit(rel, store, emb[ka].values[i], emb[kb].values[j])
            for i, j in pairs
        ]
        np.testing.assert_allclose(got, want, atol=1e-12)

    @pytest.mark.parametrize("rid", ["seA", "ppi", "target"])
    def test_probabilities_match(self, setup, rid):
        g, store, emb = setup
        rel = g.relation(rid)
        ka, kb = rel.endpoint_kinds()
        pairs = np.array([(0, 1), (1, 2), (2, 0)])
        got = pair_probabilities(store, rel, emb, pairs)
        for (i, j), p in zip(pairs, got):
            logit = loop_logit(rel, store, emb[ka].values[i], emb[kb].values[j])
            np.testing.assert_allclose(p, 1.0 / (1.0 + np.exp(-logit)), atol=1e-12)


class TestSymmetry:
    @pytest.mark.parametrize("rid", ["seA", "ppi"])
    def test_orientation_invariant(self, setup, rid):
        g, store, emb = setup
        rel = g.relation(rid)
        fwd = pair_probabilities(store, rel, emb, np.array([(0, 2), (1, 2)]))
        rev = pair_probabilities(store, rel, emb, np.array([(2, 0), (2, 1)]))
        np.testing.assert_allclose(fwd, rev, atol=1e-12)

    def test_effective_matrix_symmetric(self, setup):
        g, store, _ = setup
        for rid in ("seA", "seB", "ppi"):
            w = effective_bilinear(store, g.relation(rid))
            np.testing.assert_allclose(w, w.T, atol=0)

    def test_target_is_oriented(self, setup):
        g, store, emb = setup
        rel = g.relation("target")
        w = effective_bilinear(store, rel)
        assert not np.allclose(w, w.T)


class TestGradients:
    def test_all_parameter_gradients(self, setup):
        g, store, emb = setup
        pairs = {"seA": np.array([(0, 1), (2, 3)]), "ppi": np.array([(0, 1)]),
                 "target": np.array([(1, 2), (0, 0)])}

        def forward(tape):
            total = None
            for rid, p in pairs.items():
                s = tape.sum_all(tape.sigmoid(pair_logits(store, g.relation(rid), emb, p, tape)))
                total = s if total is None else tape.add(total, s)
            return total

        tape = Tape()
        tape.backward(forward(tape))
        h = 1e-6
        rng = np.random.default_rng(1)
        targets = [store[n] for n in store.names()] + [emb[NodeKind.DRUG], emb[NodeKind.PROTEIN]]
        for t in targets:
            for _ in range(4):
                r, c = rng.integers(t.shape[0]), rng.integers(t.shape[1])
                orig = t.values[r, c]
                t.values[r, c] = orig + h
                up = forward(Tape(record=False)).item()
                t.values[r, c] = orig - h
                down = forward(Tape(record=False)).item()
                t.values[r, c] = orig
                fd = (up - down) / (2 * h)
                assert abs(t.grad[r, c] - fd) < 1e-6


class TestTopPairs:
    def brute_force(self, store, rel, emb, k, exclude=None):
        ka, kb = rel.endpoint_kinds()
        za, zb = emb[ka].values, emb[kb].values
        excluded = set(map(tuple, exclude)) if exclude is not None else set()
        rows = []
        for i in range(za.shape[0]):
            lo = i + 1 if rel.symmetric else 0
            for j in range(lo, zb.shape[0]):
                if (i, j) in excluded:
                    continue
                w = effective_bilinear(store, rel)
                p = float(stable_sigmoid(np.array([[za[i] @ w @ zb[j]]]))[0, 0])
                rows.append((p, i, j))
        rows.sort(key=lambda r: (-r[0], r[1], r[2]))
        return [EdgeScore(rel.relation_id, i, j, p) for p, i, j in rows[:k]]

    @pytest.mark.parametrize("rid", ["seA", "target"])
    @pytest.mark.parametrize("chunk", [1, 2, 1000])
    def test_matches_brute_force(self, setup, rid, chunk):
        g, store, emb = setup
        rel = g.relation(rid)
        got = top_pairs(store, rel, emb, k=5, chunk_rows=chunk)
        want = self.brute_force(store, rel, emb, k=5)
        assert [(e.i, e.j) for e in got] == [(e.i, e.j) for e in want]
        np.testing.assert_allclose([e.probability for e in got],
                                   [e.probability for e in want], atol=1e-15)

    def test_exclusion(self, setup):
        g, store, emb = setup
        rel = g.relation("seA")
        full = top_pairs(store, rel, emb, k=3)
        banned = [(full[0].i, full[0].j)]
        reduced = top_pairs(store, rel, emb, k=3, exclude=banned)
        assert (reduced[0].i, reduced[0].j) == (full[1].i, full[1].j)

    def test_tie_break_on_duplicate_embeddings(self, setup):
        g, store, _ = setup
        rel = g.relation("seA")
        base = np.random.default_rng(2).normal(size=(1, 5))
        emb = {NodeKind.DRUG: Tensor(np.repeat(base, 4, axis=0)),
               NodeKind.PROTEIN: Tensor(np.zeros((3, 5)))}
        got = top_pairs(store, rel, emb, k=4)
        assert [(e.i, e.j) for e in got] == [(0, 1), (0, 2), (0, 3), (1, 2)]

    def test_k_validation(self, setup):
        g, store, emb = setup
        with pytest.raises(ArgumentError):
            top_pairs(store, g.relation("seA"), emb, k=0)
