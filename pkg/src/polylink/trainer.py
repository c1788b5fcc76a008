"""Mini-batch training loop shared by the graph model and the baselines.

One epoch shuffles every training edge across relations into one pool,
walks it in fixed-size batches, and for each batch recomputes the node
embeddings (the whole encoder runs; gradients only flow through the rows a
batch touches), draws fresh uniform negatives, and applies one Adam step
to the summed per-edge losses

    J(i, j) = -log p(i, j) - log(1 - p(i, j'))

with the corrupted partner j' drawn uniformly among non-edges of the same
relation.  After each epoch a validation criterion is measured with
dropout off against the split's frozen negatives; the loop keeps the best
parameters seen and stops once ``early_stop_window`` consecutive epochs
fail to improve.

All randomness is drawn from named streams derived from (seed, stream,
epoch[, batch]), so runs are reproducible to the byte for a fixed seed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .autodiff import Tape, Tensor
from .decoder import init_decoder_params, pair_logits, pair_probabilities
from .encoder import build_channels, encode, init_encoder_params
from .errors import ArgumentError, CheckpointError, ContractError
from .graph import EdgeSplit, MultimodalGraph, NodeKind, RelationRef
from .metrics import evaluate
from .optim import ParamStore, adam_step, as_seed_sequence
from .validation import check_open_unit, check_positive, check_positive_int

STREAM_SHUFFLE = 0
STREAM_NEGATIVE = 1
STREAM_DROPOUT = 2
STREAM_INIT = 3


@dataclass(frozen=True)
class TrainConfig:
    hidden_dims: tuple = (64, 32)
    learning_rate: float = 0.001
    max_epochs: int = 100
    batch_size: int = 512
    dropout: float = 0.1
    early_stop_window: int = 2
    negatives_per_positive: int = 1
    final_activation: bool = True
    early_stop_metric: str = "loss"
    embedding_dim: int = 32
    precision: int = 64

    def validated(self) -> "TrainConfig":
        dims = tuple(int(d) for d in self.hidden_dims)
        if not dims or any(d < 1 for d in dims):
            raise ArgumentError(f"hidden_dims must be positive widths, got {self.hidden_dims}")
        check_positive(self.learning_rate, "learning_rate")
        check_positive_int(self.max_epochs, "max_epochs")
        check_positive_int(self.batch_size, "batch_size")
        if self.dropout:
            check_open_unit(self.dropout, "dropout")
        check_positive_int(self.early_stop_window, "early_stop_window")
        check_positive_int(self.negatives_per_positive, "negatives_per_positive")
        check_positive_int(self.embedding_dim, "embedding_dim")
        if self.early_stop_metric not in ("loss", "auprc"):
            raise ArgumentError(f"early_stop_metric must be loss or auprc, got {self.early_stop_metric!r}")
        if self.precision not in (64, 32):
            raise ArgumentError(f"precision must be 64 or 32, got {self.precision}")
        return replace(self, hidden_dims=dims)

    @property
    def dtype(self):
        return np.float64 if self.precision == 64 else np.float32


class EarlyStopper:
    """Stop after ``window`` consecutive epochs without a new best value."""

    def __init__(self, window: int):
        check_positive_int(window, "window")
        self.window = window
        self.best_value = np.inf
        self.best_epoch = -1
        self.failures = 0

    def update(self, epoch: int, value: float) -> bool:
        """Record an epoch's criterion; True when it is a new best."""
        if value < self.best_value:
            self.best_value = value
            self.best_epoch = epoch
            self.failures = 0
            return True
        self.failures += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.failures >= self.window


class NegativeSampler:
    """Uniform corruption of the second endpoint, avoiding known positives.

    Rejection lists contain only the training positives of the relation:
    held-out edges may be drawn as negatives, matching how the evaluation
    folds were frozen out of sight of the sampler.
    """

    def __init__(self, graph: MultimodalGraph, train_pos: dict):
        self._space = {}
        for rel in graph.relations:
            rid = rel.relation_id
            pairs = train_pos.get(rid)
            if pairs is None or len(pairs) == 0:
                continue
            kind_a, kind_b = rel.endpoint_kinds()
            known = {(int(i), int(j)) for i, j in pairs}
            degree = np.zeros(graph.n_nodes(kind_a), dtype=np.int64)
            for i, j in pairs:
                degree[i] += 1
                if rel.symmetric:
                    degree[j] += 1
            self._space[rid] = {
                "n_partners": graph.n_nodes(kind_b),
                "symmetric": rel.symmetric,
                "known": known,
                "degree": degree,
            }
        self.skipped: dict[str, int] = {}

    def admissible_partners(self, relation: RelationRef, node: int) -> int:
        info = self._space[relation.relation_id]
        own = 1 if info["symmetric"] else 0
        return info["n_partners"] - int(info["degree"][node]) - own

    def sample(self, relation: RelationRef, pos_pairs: np.ndarray,
               rng: np.random.Generator, per_positive: int = 1):
        """Corrupted pairs plus the mask of positives that admitted one.

        Returns (negatives, keep) where negatives has ``per_positive`` rows
        per kept positive, in positive order.
        """
        rid = relation.relation_id
        info = self._space[rid]
        n_b = info["n_partners"]
        known = info["known"]
        symmetric = info["symmetric"]
        pos_pairs = np.asarray(pos_pairs, dtype=np.int64).reshape(-1, 2)
        keep = np.ones(pos_pairs.shape[0], dtype=bool)
        out = []
        for row, (i, j) in enumerate(pos_pairs):
            i = int(i)
            if self.admissible_partners(relation, i) < 1:
                keep[row] = False
                self.skipped[rid] = self.skipped.get(rid, 0) + 1
                continue
            for _ in range(per_positive):
                while True:
                    cand = int(rng.integers(n_b))
                    if symmetric and cand == i:
                        continue
                    key = (min(i, cand), max(i, cand)) if symmetric else (i, cand)
                    if key in known:
                        continue
                    out.append((i, cand))
                    break
        return np.asarray(out, dtype=np.int64).reshape(-1, 2), keep


class GraphConvModel:
    """Convolutional encoder plus bilinear decoders, trained on every relation."""

    def __init__(self, graph: MultimodalGraph, train_edges: dict, config: TrainConfig):
        self.graph = graph
        self.config = config
        self.channels = build_channels(graph, train_edges)
        self._train_relations = [
            rel for rel in graph.relations
            if len(train_edges.get(rel.relation_id, ())) > 0
        ]

    def init_params(self, store: ParamStore, seed) -> None:
        enc_seed, dec_seed = as_seed_sequence(seed).spawn(2)
        init_encoder_params(self.graph, self.config.hidden_dims, enc_seed, store)
        init_decoder_params(self.graph, self.config.hidden_dims[-1], dec_seed, store)

    def train_relations(self) -> list[RelationRef]:
        return list(self._train_relations)

    def embeddings(self, store: ParamStore, tape: Tape, *, training: bool = False,
                   rng: np.random.Generator | None = None) -> dict:
        return encode(self.graph, store, self.config.hidden_dims, self.channels,
                      tape, training=training, dropout_rate=self.config.dropout,
                      rng=rng, final_activation=self.config.final_activation)

    def logits(self, store, relation, embeddings, pairs, tape) -> Tensor:
        return pair_logits(store, relation, embeddings, pairs, tape)

    def probabilities(self, store, relation, embeddings, pairs) -> np.ndarray:
        return pair_probabilities(store, relation, embeddings, pairs)


def group_loss(model, store, embeddings, tape: Tape, relation: RelationRef,
               pos_pairs: np.ndarray, neg_pairs: np.ndarray) -> Tensor:
    """Summed cross-entropy of one relation's positives and negatives."""
    lp = model.logits(store, relation, embeddings, pos_pairs, tape)
    ln = model.logits(store, relation, embeddings, neg_pairs, tape)
    # log(1 - sigmoid(z)) == log_sigmoid(-z); both terms go through the
    # stable form so saturated logits keep finite values and live gradients.
    pos_term = tape.sum_all(tape.log_sigmoid(lp))
    neg_term = tape.sum_all(
        tape.log_sigmoid(tape.affine(ln, alpha=-1.0, beta=0.0)))
    return tape.affine(tape.add(pos_term, neg_term), alpha=-1.0, beta=0.0)


def fold_loss(model, store, graph: MultimodalGraph, split: EdgeSplit,
              fold: str, relations=None) -> float:
    """Mean per-positive loss on a fold against its frozen negatives."""
    relations = relations if relations is not None else model.train_relations()
    tape = Tape(record=False)
    emb = model.embeddings(store, tape, training=False)
    total = 0.0
    count = 0
    for rel in relations:
        rid = rel.relation_id
        pos = split.positives(fold, rid)
        if pos.shape[0] == 0:
            continue
        neg = split.negatives(fold, rid)
        total += group_loss(model, store, emb, tape, rel, pos, neg).item()
        count += pos.shape[0]
    if count == 0:
        raise ContractError(f"fold {fold!r} holds no positives for validation")
    return total / count


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_value: float
    improved: bool
    seconds: float


@dataclass
class TrainResult:
    store: ParamStore
    model: object
    history: list = field(default_factory=list)
    best_epoch: int = -1
    best_value: float = np.inf
    stopped_early: bool = False

    def embeddings(self) -> dict:
        return self.model.embeddings(self.store, Tape(record=False), training=False)


def _pooled_contributions(graph: MultimodalGraph, split: EdgeSplit, relations) -> np.ndarray:
    rows = []
    for rel in relations:
        pairs = split.train_pos[rel.relation_id]
        if pairs.shape[0] == 0:
            continue
        pos = graph.relation_position(rel)
        rows.append(np.column_stack([np.full(pairs.shape[0], pos, dtype=np.int64), pairs]))
    if not rows:
        raise ContractError("no training edges in any relation")
    return np.concatenate(rows, axis=0)


def _stream_rng(seed: int, stream: int, *extra) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((int(seed), stream) + tuple(int(x) for x in extra)))


def validation_value(model, store, graph, split, config, relations) -> float:
    """The early-stopping criterion; lower is better for either metric."""
    if config.early_stop_metric == "loss":
        return fold_loss(model, store, graph, split, "val", relations)
    emb = model.embeddings(store, Tape(record=False), training=False)
    report = evaluate(store, graph, split, emb, fold="val",
                      probability_fn=model.probabilities)
    return -report.macro_auprc


def train(graph: MultimodalGraph, split: EdgeSplit, config: TrainConfig,
          seed: int = 0, model=None, log_fn=None,
          resume_from: ParamStore | None = None) -> TrainResult:
    """Fit a model on the split's training fold; returns best-epoch params.

    ``resume_from`` overlays a loaded checkpoint's values (and step counter)
    on the freshly built parameters; Adam moments start from zero again.
    """
    config = config.validated()
    if model is None:
        model = GraphConvModel(graph, split.train_pos, config)
    store = ParamStore(dtype=config.dtype)
    model.init_params(store, np.random.SeedSequence((int(seed), STREAM_INIT)))
    if resume_from is not None:
        if resume_from.names() != store.names():
            raise CheckpointError(
                "resume checkpoint does not match the model's parameters")
        store.restore(resume_from.snapshot())
    relations = model.train_relations()
    contributions = _pooled_contributions(graph, split, relations)
    sampler = NegativeSampler(graph, split.train_pos)
    stopper = EarlyStopper(config.early_stop_window)
    result = TrainResult(store=store, model=model)
    best_snapshot = None
    n = contributions.shape[0]

    for epoch in range(1, config.max_epochs + 1):
        started = time.perf_counter()
        order = _stream_rng(seed, STREAM_SHUFFLE, epoch).permutation(n)
        rng_neg = _stream_rng(seed, STREAM_NEGATIVE, epoch)
        epoch_loss = 0.0
        epoch_edges = 0
        for batch_index, start in enumerate(range(0, n, config.batch_size)):
            batch = contributions[order[start:start + config.batch_size]]
            rng_drop = _stream_rng(seed, STREAM_DROPOUT, epoch, batch_index)
            tape = Tape()
            emb = model.embeddings(store, tape, training=True, rng=rng_drop)
            loss = None
            for rel in relations:
                rows = batch[batch[:, 0] == graph.relation_position(rel)]
                if rows.shape[0] == 0:
                    continue
                negs, keep = sampler.sample(rel, rows[:, 1:], rng_neg,
                                            config.negatives_per_positive)
                pos = rows[:, 1:][keep]
                if pos.shape[0] == 0:
                    continue
                term = group_loss(model, store, emb, tape, rel, pos, negs)
                loss = term if loss is None else tape.add(loss, term)
                epoch_edges += pos.shape[0]
            if loss is None:
                continue
            tape.backward(loss)
            adam_step(store, lr=config.learning_rate)
            epoch_loss += loss.item()

        val_value = validation_value(model, store, graph, split, config, relations)
        improved = stopper.update(epoch, val_value)
        if improved:
            best_snapshot = store.snapshot()
        record = EpochRecord(epoch, epoch_loss / max(epoch_edges, 1), val_value,
                             improved, time.perf_counter() - started)
        result.history.append(record)
        if log_fn is not None:
            log_fn(f"epoch {record.epoch:3d}  train {record.train_loss:.6f}  "
                   f"val {record.val_value:.6f}{'  *' if improved else ''}")
        if stopper.should_stop:
            result.stopped_early = True
            break

    if best_snapshot is not None:
        store.restore(best_snapshot)
    result.best_epoch = stopper.best_epoch
    result.best_value = stopper.best_value
    return result
