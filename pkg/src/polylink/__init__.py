"""Multirelational link prediction on drug/protein graphs."""

import os as _os

# Cap BLAS/OpenMP pools before numpy loads; explicit settings win.
_threads = _os.environ.get("POLYLINK_THREADS")
if _threads and _threads.isdigit() and int(_threads) > 0:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                 "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from .baselines import FactorModel, train_baseline
from .datagen import PlantedTruth, SyntheticSpec, generate, oracle_scores
from .errors import (
    ArgumentError,
    CheckpointError,
    ContractError,
    FormatError,
    GenerationError,
    GraphLookupError,
    NoCheckpointError,
    NumericError,
    PolylinkError,
    SplitError,
    UndefinedMetricError,
)
from .estimators import DedicomLinkPredictor, GraphLinkPredictor, RescalLinkPredictor
from .graph import (
    EdgeSplit,
    MultimodalGraph,
    NodeKind,
    RelationFamily,
    RelationRef,
    build_graph,
    split_edges,
)
from .io import IngestPaths, IngestReport, ingest, write_synthetic_dataset
from .metrics import EvalReport, RelationMetrics, evaluate
from .stats import (
    CooccurrenceFinding,
    CooccurrenceTable,
    KsResult,
    cooccurrence_test,
    embedding_cooccurrence_distance,
    jaccard,
    jaccard_strata,
    ks_2sample,
)
from .trainer import TrainConfig, TrainResult, train

__version__ = "0.1.0"

__all__ = [
    "ArgumentError",
    "CheckpointError",
    "ContractError",
    "CooccurrenceFinding",
    "CooccurrenceTable",
    "DedicomLinkPredictor",
    "EdgeSplit",
    "EvalReport",
    "FactorModel",
    "FormatError",
    "GenerationError",
    "GraphLinkPredictor",
    "GraphLookupError",
    "IngestPaths",
    "IngestReport",
    "KsResult",
    "MultimodalGraph",
    "NoCheckpointError",
    "NodeKind",
    "NumericError",
    "PlantedTruth",
    "PolylinkError",
    "RelationFamily",
    "RelationMetrics",
    "RelationRef",
    "RescalLinkPredictor",
    "SplitError",
    "SyntheticSpec",
    "TrainConfig",
    "TrainResult",
    "UndefinedMetricError",
    "build_graph",
    "cooccurrence_test",
    "embedding_cooccurrence_distance",
    "evaluate",
    "generate",
    "ingest",
    "jaccard",
    "jaccard_strata",
    "ks_2sample",
    "oracle_scores",
    "split_edges",
    "train",
    "train_baseline",
    "write_synthetic_dataset",
]
