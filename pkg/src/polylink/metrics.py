"""Ranking metrics for link prediction and fold-level evaluation reports.

Tie handling is fixed once and shared by every caller: AUROC gives tied
pairs half credit (tie-averaged ranks), while the precision metrics treat a
run of equal scores as an atomic block and credit every positive in the
block with the precision measured at the block's end.  Under that
convention the truncated average precision over the top 50 coincides with
the untruncated one whenever 50 or fewer candidates are scored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decoder import pair_probabilities
from .errors import UndefinedMetricError
from .graph import EdgeSplit, MultimodalGraph, RelationFamily

AP_CUTOFF = 50


def tie_averaged_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks, equal values sharing the mean of their rank range."""
    values = np.asarray(values, dtype=np.float64).ravel()
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    boundary = np.empty(values.size, dtype=bool)
    boundary[0] = True
    boundary[1:] = sorted_vals[1:] != sorted_vals[:-1]
    block = np.cumsum(boundary) - 1
    counts = np.bincount(block)
    ends = np.cumsum(counts)
    starts = ends - counts + 1
    ranks = np.empty(values.size, dtype=np.float64)
    ranks[order] = ((starts + ends) / 2.0)[block]
    return ranks


def _validated(y_true, scores):
    y = np.asarray(y_true).ravel().astype(bool)
    s = np.asarray(scores, dtype=np.float64).ravel()
    if y.size != s.size:
        raise UndefinedMetricError(f"{y.size} labels vs {s.size} scores")
    if y.size == 0:
        raise UndefinedMetricError("no examples")
    return y, s


def auroc(y_true, scores) -> float:
    """Probability a random positive outranks a random negative, ties half."""
    y, s = _validated(y_true, scores)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("auroc needs both classes")
    ranks = tie_averaged_ranks(s)
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def _block_structure(y, s):
    """Descending-score tie blocks: per block (positives, size) plus totals."""
    order = np.argsort(-s, kind="stable")
    sorted_y = y[order]
    sorted_s = s[order]
    boundary = np.empty(s.size, dtype=bool)
    boundary[0] = True
    boundary[1:] = sorted_s[1:] != sorted_s[:-1]
    block = np.cumsum(boundary) - 1
    sizes = np.bincount(block)
    tp = np.bincount(block, weights=sorted_y).astype(np.int64)
    return tp, sizes


def auprc(y_true, scores) -> float:
    """Average precision with atomic tie blocks (block-end precision)."""
    y, s = _validated(y_true, scores)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise UndefinedMetricError("auprc needs at least one positive")
    tp, sizes = _block_structure(y, s)
    cum_tp = np.cumsum(tp)
    cum_n = np.cumsum(sizes)
    precision = cum_tp / cum_n
    return float((precision * tp).sum() / n_pos)


def ap_at_k(y_true, scores, k: int = AP_CUTOFF) -> float:
    """Average precision over the top-k candidates, normalized by min(k, n_pos).

    Candidates are ordered by descending score with input order breaking
    ties; a positive inside the top k is still credited with the precision
    at the end of its full tie block.
    """
    y, s = _validated(y_true, scores)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise UndefinedMetricError("ap@k needs at least one positive")
    if k < 1:
        raise UndefinedMetricError(f"ap@k needs k >= 1, got {k}")
    tp, sizes = _block_structure(y, s)
    cum_tp = np.cumsum(tp)
    cum_n = np.cumsum(sizes)
    precision = cum_tp / cum_n
    order = np.argsort(-s, kind="stable")
    sorted_y = y[order]
    block_of = np.repeat(np.arange(sizes.size), sizes)
    top = slice(0, min(k, y.size))
    hits = sorted_y[top]
    total = precision[block_of[top][hits]].sum()
    return float(total / min(k, n_pos))


@dataclass(frozen=True)
class RelationMetrics:
    relation_id: str
    n_pos: int
    n_neg: int
    auroc: float
    auprc: float
    ap50: float


@dataclass(frozen=True)
class EvalReport:
    fold: str
    rows: tuple
    macro_auroc: float
    macro_auprc: float
    macro_ap50: float

    def row(self, relation_id: str) -> RelationMetrics:
        for r in self.rows:
            if r.relation_id == relation_id:
                return r
        raise UndefinedMetricError(f"relation {relation_id!r} not in report")

    def ranked(self, metric: str = "auprc", best_first: bool = True) -> list:
        """Rows sorted by a metric, ties broken by relation id."""
        key = {"auroc": lambda r: r.auroc, "auprc": lambda r: r.auprc,
               "ap50": lambda r: r.ap50}[metric]
        return sorted(self.rows, key=lambda r: (-key(r) if best_first else key(r),
                                                r.relation_id))


def evaluate(store, graph: MultimodalGraph, split: EdgeSplit, embeddings,
             fold: str = "test", relations=None, probability_fn=None) -> EvalReport:
    """Score a fold's frozen positives and negatives, relation by relation.

    Defaults to the side-effect relations, the family the headline numbers
    summarize; pass explicit ``relations`` to widen.  Relations whose fold
    is empty are skipped.  ``probability_fn(store, relation, embeddings,
    pairs)`` overrides the bilinear decoder (used by the factorization
    baselines).
    """
    if fold not in ("val", "test"):
        raise UndefinedMetricError(f"fold must be val or test, got {fold!r}")
    if relations is None:
        relations = [r for r in graph.relations if r.family is RelationFamily.SIDE_EFFECT]
    rows = []
    for rel in relations:
        rid = rel.relation_id
        pos = split.positives(fold, rid)
        neg = split.negatives(fold, rid)
        if pos.shape[0] == 0:
            continue
        if probability_fn is None:
            p_pos = pair_probabilities(store, rel, embeddings, pos)
            p_neg = pair_probabilities(store, rel, embeddings, neg)
        else:
            p_pos = probability_fn(store, rel, embeddings, pos)
            p_neg = probability_fn(store, rel, embeddings, neg)
        y = np.concatenate([np.ones(p_pos.size, dtype=bool), np.zeros(p_neg.size, dtype=bool)])
        s = np.concatenate([p_pos, p_neg])
        rows.append(RelationMetrics(rid, int(p_pos.size), int(p_neg.size),
                                    auroc(y, s), auprc(y, s), ap_at_k(y, s)))
    if not rows:
        raise UndefinedMetricError(f"no relation had {fold} edges to score")
    return EvalReport(
        fold=fold,
        rows=tuple(rows),
        macro_auroc=float(np.mean([r.auroc for r in rows])),
        macro_auprc=float(np.mean([r.auprc for r in rows])),
        macro_ap50=float(np.mean([r.ap50 for r in rows])),
    )
