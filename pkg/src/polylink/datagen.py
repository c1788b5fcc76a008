"""Synthetic benchmark graphs with known generating factors.

Nodes get latent vectors, relations get planted bilinear cores, and edges
are Bernoulli draws from a calibrated sigmoid of the latent scores.  The
returned :class:`PlantedTruth` keeps everything needed to score any pair
under the generating model, so recovery experiments have an exact oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .autodiff import stable_sigmoid
from .errors import ArgumentError, GenerationError
from .graph import (
    PPI_RELATION_ID,
    TARGET_RELATION_ID,
    MultimodalGraph,
    RelationFamily,
    RelationRef,
)
from .validation import as_pair_array, check_open_unit, check_positive, check_positive_int

STREAM_LATENTS = 0
STREAM_CORES = 1
STREAM_EDGES = 2
STREAM_FEATURES = 3

_BISECT_ROUNDS = 50
_BIAS_SPAN = 60.0


@dataclass(frozen=True)
class SyntheticSpec:
    """Size and signal knobs for one generated benchmark."""

    n_drugs: int = 120
    n_proteins: int = 300
    n_side_effects: int = 12
    latent_dim: int = 8
    side_effect_density: float = 0.05
    ppi_density: float = 0.01
    target_density: float = 0.02
    feature_width: int = 16
    feature_flip_rate: float = 0.1
    sharpness: float = 5.0
    seed: int = 7

    def validated(self) -> "SyntheticSpec":
        check_positive_int(self.n_drugs, "n_drugs")
        check_positive_int(self.n_proteins, "n_proteins")
        check_positive_int(self.n_side_effects, "n_side_effects")
        check_positive_int(self.latent_dim, "latent_dim")
        check_positive_int(self.feature_width, "feature_width")
        check_open_unit(self.side_effect_density, "side_effect_density")
        check_open_unit(self.ppi_density, "ppi_density")
        check_open_unit(self.target_density, "target_density")
        check_positive(self.sharpness, "sharpness")
        if not 0.0 <= self.feature_flip_rate < 0.5:
            raise ArgumentError("feature_flip_rate must sit in [0, 0.5) to stay informative")
        return self

    def side_effect_ids(self) -> list:
        width = max(2, len(str(self.n_side_effects - 1)))
        return [f"se{k:0{width}d}" for k in range(self.n_side_effects)]


def _stream(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, stream)))


@dataclass
class PlantedTruth:
    """Generating factors, calibrated biases, and exact pair probabilities.

    Indices line up with the graph produced alongside it: drug row i is the
    node whose external id is ``drug_ids[i]``, so no remapping is needed.
    """

    spec: SyntheticSpec
    drug_latents: np.ndarray
    protein_latents: np.ndarray
    shared_core: np.ndarray
    diagonals: dict
    ppi_core: np.ndarray
    target_core: np.ndarray
    biases: dict = field(default_factory=dict)
    realized: dict = field(default_factory=dict)

    def score_matrix(self, relation_id: str) -> np.ndarray:
        """Raw bilinear scores for every ordered pair, before calibration."""
        if relation_id == PPI_RELATION_ID:
            return self.protein_latents @ self.ppi_core @ self.protein_latents.T
        if relation_id == TARGET_RELATION_ID:
            return self.drug_latents @ self.target_core @ self.protein_latents.T
        try:
            d = self.diagonals[relation_id]
        except KeyError:
            raise GenerationError(f"no planted factors for relation {relation_id!r}") from None
        h = self.drug_latents * d
        return h @ self.shared_core @ h.T

    def probability_matrix(self, relation_id: str) -> np.ndarray:
        g = self.score_matrix(relation_id)
        return stable_sigmoid(self.spec.sharpness * g + self.biases[relation_id])

    def edge_probability(self, relation_id: str, i: int, j: int) -> float:
        return float(self.probability_matrix(relation_id)[i, j])


def _calibrate_bias(scores: np.ndarray, sharpness: float, density: float) -> float:
    """Bisect the intercept until the mean edge probability hits ``density``.

    The mean of sigmoid(sharpness * g + b) is strictly increasing in b, so
    plain bisection over a wide bracket converges; 50 halvings push the
    bracket far below float precision.
    """
    scaled = sharpness * scores
    # The bracket must outrun the scaled scores or extreme pairs pin the mean.
    span = _BIAS_SPAN + float(np.abs(scaled).max())
    lo, hi = -span, span

    def mean_prob(b):
        return float(stable_sigmoid(scaled + b).mean())

    if not mean_prob(lo) <= density <= mean_prob(hi):
        raise GenerationError("density is not reachable inside the bias bracket")
    for _ in range(_BISECT_ROUNDS):
        mid = 0.5 * (lo + hi)
        if mean_prob(mid) < density:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _symmetric_core(rng: np.random.Generator, dim: int) -> np.ndarray:
    a = rng.normal(size=(dim, dim)) / np.sqrt(dim)
    return 0.5 * (a + a.T)


def _sample_pairs(prob_flat: np.ndarray, pairs: np.ndarray, rng) -> list:
    draws = rng.random(prob_flat.shape)
    return [tuple(p) for p in pairs[draws < prob_flat]]


def generate(spec: SyntheticSpec = SyntheticSpec()) -> tuple:
    """Draw one benchmark graph; returns ``(graph, truth)``.

    Every relation's intercept is calibrated so its expected density matches
    the spec before edges are sampled.  Drug inputs are noisy sign
    indicators of the latent coordinates (feature f watches coordinate
    ``f % latent_dim`` and flips with ``feature_flip_rate``).
    """
    spec = spec.validated()
    rng_latents = _stream(spec.seed, STREAM_LATENTS)
    rng_cores = _stream(spec.seed, STREAM_CORES)
    rng_edges = _stream(spec.seed, STREAM_EDGES)
    rng_features = _stream(spec.seed, STREAM_FEATURES)

    zd = rng_latents.normal(size=(spec.n_drugs, spec.latent_dim))
    zp = rng_latents.normal(size=(spec.n_proteins, spec.latent_dim))

    shared = _symmetric_core(rng_cores, spec.latent_dim)
    se_ids = spec.side_effect_ids()
    diagonals = {rid: rng_cores.normal(size=spec.latent_dim) for rid in se_ids}
    ppi_core = _symmetric_core(rng_cores, spec.latent_dim)
    target_core = rng_cores.normal(size=(spec.latent_dim, spec.latent_dim)) / np.sqrt(spec.latent_dim)

    truth = PlantedTruth(spec=spec, drug_latents=zd, protein_latents=zp,
                         shared_core=shared, diagonals=diagonals,
                         ppi_core=ppi_core, target_core=target_core)

    iu_d = np.triu_indices(spec.n_drugs, k=1)
    drug_pairs = np.column_stack(iu_d)
    iu_p = np.triu_indices(spec.n_proteins, k=1)
    protein_pairs = np.column_stack(iu_p)
    dp_pairs = np.column_stack([g.ravel() for g in np.meshgrid(
        np.arange(spec.n_drugs), np.arange(spec.n_proteins), indexing="ij")])

    edges = {}
    plans = [(PPI_RELATION_ID, spec.ppi_density, iu_p, protein_pairs),
             (TARGET_RELATION_ID, spec.target_density, None, dp_pairs)]
    plans += [(rid, spec.side_effect_density, iu_d, drug_pairs) for rid in se_ids]
    for rid, density, triangle, pairs in plans:
        scores = truth.score_matrix(rid)
        flat = scores[triangle] if triangle is not None else scores.ravel()
        truth.biases[rid] = _calibrate_bias(flat, spec.sharpness, density)
        probs = stable_sigmoid(spec.sharpness * flat + truth.biases[rid])
        drawn = _sample_pairs(probs, pairs, rng_edges)
        if not drawn:
            raise GenerationError(
                f"relation {rid!r} drew no edges; raise its density or change the seed")
        edges[rid] = drawn
        truth.realized[rid] = np.array(drawn, dtype=np.int64)

    signs = zd[:, np.arange(spec.feature_width) % spec.latent_dim] > 0
    flips = rng_features.random(signs.shape) < spec.feature_flip_rate
    features = sp.csr_matrix((signs ^ flips).astype(np.float64))

    d_width = max(3, len(str(spec.n_drugs - 1)))
    p_width = max(3, len(str(spec.n_proteins - 1)))
    drug_ids = [f"D{k:0{d_width}d}" for k in range(spec.n_drugs)]
    protein_ids = [f"P{k:0{p_width}d}" for k in range(spec.n_proteins)]
    f_width = max(2, len(str(spec.feature_width - 1)))
    feature_names = [f"f{k:0{f_width}d}" for k in range(spec.feature_width)]

    relations = [RelationRef(RelationFamily.PROTEIN_PROTEIN),
                 RelationRef(RelationFamily.DRUG_TARGET)]
    relations += [RelationRef(RelationFamily.SIDE_EFFECT, rid) for rid in se_ids]
    graph = MultimodalGraph(drug_ids, protein_ids, relations, edges,
                            features, feature_names)
    return graph, truth


def oracle_scores(truth: PlantedTruth, relation_id: str, pairs) -> np.ndarray:
    """Exact generating-model probabilities for the given index pairs."""
    arr = as_pair_array(pairs)
    if relation_id == PPI_RELATION_ID:
        n_i = n_j = truth.spec.n_proteins
    elif relation_id == TARGET_RELATION_ID:
        n_i, n_j = truth.spec.n_drugs, truth.spec.n_proteins
    else:
        n_i = n_j = truth.spec.n_drugs
    if arr.size and (arr.min() < 0 or arr[:, 0].max() >= n_i or arr[:, 1].max() >= n_j):
        raise ArgumentError(f"pair indices out of range for relation {relation_id!r}")
    pm = truth.probability_matrix(relation_id)
    return pm[arr[:, 0], arr[:, 1]]


def with_seed(spec: SyntheticSpec, seed: int) -> SyntheticSpec:
    return replace(spec, seed=seed)
