import numpy as np
import pytest
from sklearn.base import clone

from polylink.datagen import SyntheticSpec, generate
from polylink.encoder import NodeKind
from polylink.errors import ArgumentError, ContractError, GraphLookupError
from polylink.estimators import (
    DedicomLinkPredictor,
    GraphLinkPredictor,
    RescalLinkPredictor,
)
from polylink.graph import split_edges
from polylink.trainer import TrainConfig, train


SPEC = SyntheticSpec(n_drugs=30, n_proteins=40, n_side_effects=4,
                     latent_dim=4, ppi_density=0.1, target_density=0.05,
                     side_effect_density=0.05, feature_width=8, seed=3)

FAST = dict(hidden_dims=(16, 8), max_epochs=3, early_stop_window=3,
            batch_size=256, seed=5)


@pytest.fixture(scope="module")
def dataset():
    graph, _ = generate(SPEC)
    return graph, split_edges(graph, seed=1)


@pytest.fixture(scope="module")
def fitted(dataset):
    graph, split = dataset
    return GraphLinkPredictor(**FAST).fit(graph, split)


def test_get_params_round_trip():
    est = GraphLinkPredictor(learning_rate=0.02, dropout=0.0, seed=9)
    params = est.get_params()
    assert params["learning_rate"] == 0.02
    assert params["dropout"] == 0.0
    assert params["seed"] == 9
    twin = GraphLinkPredictor(**params)
    assert twin.get_params() == params


def test_set_params_and_clone():
    est = RescalLinkPredictor(embedding_dim=12)
    est.set_params(embedding_dim=20, seed=4)
    assert est.embedding_dim == 20
    copy = clone(est)
    assert copy.get_params() == est.get_params()
    assert copy is not est


def test_unfitted_rejects_prediction(dataset):
    est = GraphLinkPredictor(**FAST)
    with pytest.raises(ContractError):
        est.predict_proba("se00", [(0, 1)])
    with pytest.raises(ContractError):
        est.score()


def test_fit_wrong_argument_types(dataset):
    graph, split = dataset
    est = GraphLinkPredictor(**FAST)
    with pytest.raises(ArgumentError):
        est.fit(split, split)
    with pytest.raises(ArgumentError):
        est.fit(graph, {"train": {}})


def test_fit_populates_state(fitted):
    assert fitted.best_epoch_ >= 1
    assert 1 <= len(fitted.history_) <= FAST["max_epochs"]
    assert fitted.store_ is fitted.result_.store
    drug = fitted.embeddings_[NodeKind.DRUG].values
    assert drug.shape == (SPEC.n_drugs, FAST["hidden_dims"][-1])


def test_fit_returns_self(dataset):
    graph, split = dataset
    est = RescalLinkPredictor(embedding_dim=8, max_epochs=2, seed=5)
    assert est.fit(graph, split) is est


def test_predict_proba_shape_and_range(fitted):
    pairs = [(0, 1), (2, 3), (4, 5)]
    probs = fitted.predict_proba("se00", pairs)
    assert probs.shape == (3,)
    assert np.all((probs > 0.0) & (probs < 1.0))


def test_predict_threshold(fitted):
    pairs = [(0, 1), (2, 3)]
    probs = fitted.predict_proba("se01", pairs)
    assert np.array_equal(fitted.predict("se01", pairs), probs > 0.5)
    assert fitted.predict("se01", pairs, threshold=0.0).all()
    with pytest.raises(ArgumentError):
        fitted.predict("se01", pairs, threshold=1.5)


def test_matches_functional_training(dataset, fitted):
    graph, split = dataset
    config = TrainConfig(hidden_dims=(16, 8), max_epochs=3,
                         early_stop_window=3, batch_size=256)
    result = train(graph, split, config, seed=5)
    for kind in (NodeKind.DRUG, NodeKind.PROTEIN):
        assert np.array_equal(fitted.embeddings_[kind].values,
                              result.embeddings()[kind].values)


def test_seed_changes_fit(dataset, fitted):
    graph, split = dataset
    other = GraphLinkPredictor(**{**FAST, "seed": 6}).fit(graph, split)
    pairs = [(0, 1), (2, 3), (4, 5)]
    assert not np.array_equal(other.predict_proba("se00", pairs),
                              fitted.predict_proba("se00", pairs))


def test_score_and_evaluate_fold(fitted):
    report = fitted.evaluate_fold("val")
    assert report.fold == "val"
    assert fitted.score("val") == report.macro_auprc
    assert 0.0 <= fitted.score() <= 1.0


@pytest.mark.parametrize("cls,flavor", [(RescalLinkPredictor, "rescal"),
                                        (DedicomLinkPredictor, "dedicom")])
def test_baseline_estimators(dataset, cls, flavor):
    graph, split = dataset
    est = cls(embedding_dim=8, max_epochs=2, seed=5).fit(graph, split)
    assert est.flavor == flavor
    assert est.model_.flavor == flavor
    probs = est.predict_proba("se00", [(0, 1), (1, 2)])
    assert probs.shape == (2,)
    assert np.all((probs > 0.0) & (probs < 1.0))
    assert 0.0 <= est.score() <= 1.0
    with pytest.raises(GraphLookupError):
        est.predict_proba("ppi", [(0, 1)])
