"""Estimator-style wrappers around the training loop.

The functional API (``trainer.train``/``baselines.train_baseline``) stays
the workhorse; these classes add the familiar fit/predict surface with
``get_params``/``set_params``/``clone`` support so runs slot into
scikit-learn style sweeps.  ``fit`` takes the graph and a frozen edge
split instead of an (X, y) matrix pair, which is the natural unit here.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .baselines import FLAVORS, train_baseline
from .errors import ArgumentError
from .graph import EdgeSplit, MultimodalGraph
from .metrics import EvalReport, evaluate
from .trainer import TrainConfig, train
from .validation import as_pair_array, check_fitted


class _LinkPredictorBase(BaseEstimator):
    """Shared fitted-state plumbing; subclasses define `_fit_result`."""

    def _config(self) -> TrainConfig:
        raise NotImplementedError

    def _fit_result(self, graph, split, config):
        raise NotImplementedError

    def fit(self, graph: MultimodalGraph, split: EdgeSplit):
        if not isinstance(graph, MultimodalGraph):
            raise ArgumentError("fit expects a MultimodalGraph as first argument")
        if not isinstance(split, EdgeSplit):
            raise ArgumentError("fit expects an EdgeSplit as second argument")
        config = self._config().validated()
        result = self._fit_result(graph, split, config)
        self.result_ = result
        self.store_ = result.store
        self.model_ = result.model
        self.graph_ = graph
        self.split_ = split
        self.history_ = list(result.history)
        self.best_epoch_ = result.best_epoch
        self.embeddings_ = result.embeddings()
        return self

    def predict_proba(self, relation_id: str, pairs) -> np.ndarray:
        """Edge probabilities for (i, j) index pairs under one relation."""
        check_fitted(self, "store_")
        rel = self.graph_.relation(relation_id)
        arr = as_pair_array(pairs)
        return self.model_.probabilities(self.store_, rel, self.embeddings_, arr)

    def predict(self, relation_id: str, pairs, threshold: float = 0.5) -> np.ndarray:
        """Thresholded edge calls; probability > threshold means edge."""
        if not 0.0 <= threshold <= 1.0:
            raise ArgumentError(f"threshold must lie in [0, 1], got {threshold}")
        return self.predict_proba(relation_id, pairs) > threshold

    def evaluate_fold(self, fold: str = "test", relations=None) -> EvalReport:
        check_fitted(self, "store_")
        return evaluate(self.store_, self.graph_, self.split_, self.embeddings_,
                        fold=fold, relations=relations,
                        probability_fn=self.model_.probabilities)

    def score(self, fold: str = "test") -> float:
        """Macro AUPRC over side-effect relations on the requested fold."""
        return self.evaluate_fold(fold).macro_auprc


class GraphLinkPredictor(_LinkPredictorBase):
    """Relation-aware graph convolution with a bilinear decoder."""

    def __init__(self, hidden_dims=(64, 32), learning_rate=0.001, max_epochs=100,
                 batch_size=512, dropout=0.1, early_stop_window=2,
                 negatives_per_positive=1, final_activation=True,
                 early_stop_metric="loss", precision=64, seed=0):
        self.hidden_dims = hidden_dims
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.batch_size = batch_size
        self.dropout = dropout
        self.early_stop_window = early_stop_window
        self.negatives_per_positive = negatives_per_positive
        self.final_activation = final_activation
        self.early_stop_metric = early_stop_metric
        self.precision = precision
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(
            hidden_dims=tuple(self.hidden_dims),
            learning_rate=self.learning_rate,
            max_epochs=self.max_epochs,
            batch_size=self.batch_size,
            dropout=self.dropout,
            early_stop_window=self.early_stop_window,
            negatives_per_positive=self.negatives_per_positive,
            final_activation=self.final_activation,
            early_stop_metric=self.early_stop_metric,
            precision=self.precision,
        )

    def _fit_result(self, graph, split, config):
        return train(graph, split, config, seed=self.seed)


class _FactorizationBase(_LinkPredictorBase):
    flavor = ""

    def __init__(self, embedding_dim=32, learning_rate=0.001, max_epochs=100,
                 batch_size=512, early_stop_window=2, negatives_per_positive=1,
                 early_stop_metric="loss", precision=64, seed=0):
        self.embedding_dim = embedding_dim
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.batch_size = batch_size
        self.early_stop_window = early_stop_window
        self.negatives_per_positive = negatives_per_positive
        self.early_stop_metric = early_stop_metric
        self.precision = precision
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(
            embedding_dim=self.embedding_dim,
            learning_rate=self.learning_rate,
            max_epochs=self.max_epochs,
            batch_size=self.batch_size,
            dropout=0.0,
            early_stop_window=self.early_stop_window,
            negatives_per_positive=self.negatives_per_positive,
            early_stop_metric=self.early_stop_metric,
            precision=self.precision,
        )

    def _fit_result(self, graph, split, config):
        return train_baseline(graph, split, config, seed=self.seed, flavor=self.flavor)


class RescalLinkPredictor(_FactorizationBase):
    """Per-relation unconstrained bilinear cores over shared embeddings."""

    flavor = FLAVORS[0]


class DedicomLinkPredictor(_FactorizationBase):
    """Shared core with per-relation diagonal scaling over shared embeddings."""

    flavor = FLAVORS[1]
