"""Command-line entry point.

One subcommand per pipeline stage:

    ingest              parse the published CSVs, write the ingest report
    synth               generate a benchmark dataset in the ingestion formats
    train               fit a model, write checkpoint + training log + split
    evaluate            score a checkpoint on the val or test fold
    predict             rank the top-k unobserved drug-pair candidates
    stats               co-occurrence and target-overlap analyses
    export-embeddings   node embeddings and per-relation scaling vectors

Configuration is a flat JSON object (--config); command-line flags override
file values, built-in defaults fill the rest.  Every command prints the seed
and the sha256 digest of its fully resolved configuration, and fails with a
one-line ``E_CODE: message`` diagnostic on any package error.
"""

from __future__ import annotations

import argparse
import os
import sys

from .autodiff import Tape
from .baselines import FactorModel, train_baseline
from .datagen import SyntheticSpec, generate
from .decoder import top_pairs
from .errors import ArgumentError, CheckpointError, PolylinkError
from .graph import MultimodalGraph, split_edges
from .io import (
    IngestPaths,
    config_digest,
    ingest,
    load_config,
    write_csv,
    write_embeddings,
    write_eval_report,
    write_ingest_report,
    write_predictions,
    write_relation_diagonals,
    write_split_manifest,
    write_strata_table,
    write_synthetic_dataset,
    write_train_log,
    write_verdict_summary,
    write_verdict_table,
)
from .metrics import evaluate
from .optim import load_checkpoint, save_checkpoint
from .stats import CooccurrenceTable, cooccurrence_test, embedding_cooccurrence_distance, jaccard_strata
from .trainer import GraphConvModel, TrainConfig, train

COMMANDS = ("ingest", "synth", "train", "evaluate", "predict", "stats",
            "export-embeddings")
MODELS = ("main", "rescal", "dedicom")
CHECKPOINT_FILE = "checkpoint.bin"

# every recognized config key with its default; flags override file values
DEFAULTS = {
    "seed": 0,
    "out": "run",
    "model": "main",
    "fold": "test",
    "top_k": 10,
    "min_relation_count": 500,
    "precision": 64,
    # training
    "hidden_dims": [64, 32],
    "learning_rate": 0.001,
    "max_epochs": 100,
    "batch_size": 512,
    "dropout": 0.1,
    "early_stop_window": 2,
    "negatives_per_positive": 1,
    "final_activation": True,
    "early_stop_metric": "loss",
    "embedding_dim": 32,
    "resume": False,
    # data source: either the four file paths or a synthetic spec
    "ppi": "",
    "targets": "",
    "combo": "",
    "mono": "",
    "synthetic": False,
    "spec_seed": 7,
    "n_drugs": 120,
    "n_proteins": 300,
    "n_side_effects": 12,
    "latent_dim": 8,
    "side_effect_density": 0.05,
    "ppi_density": 0.01,
    "target_density": 0.02,
    "feature_width": 16,
    "feature_flip_rate": 0.1,
    "sharpness": 5.0,
    # statistics
    "focus": "",
    "n_permutations": 1000,
    "alpha": 0.05,
    "distance_k": 3,
}

FLAG_KEYS = ("seed", "out", "model", "fold", "top_k", "min_relation_count",
             "precision")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat JSON config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--model", choices=MODELS)
    common.add_argument("--fold", choices=("val", "test"))
    common.add_argument("--top-k", type=int, dest="top_k")
    common.add_argument("--min-relation-count", type=int, dest="min_relation_count")
    common.add_argument("--precision", type=int, choices=(64, 32))
    parser = argparse.ArgumentParser(prog="polylink",
                                     description="multirelational link prediction")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name, parents=[common])
        if name == "train":
            cmd.add_argument("--resume", action="store_true", default=None,
                             help="continue from the checkpoint in --out")
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    config = dict(DEFAULTS)
    if args.config:
        loaded = load_config(args.config)
        unknown = sorted(set(loaded) - set(DEFAULTS))
        if unknown:
            raise ArgumentError(f"unknown config keys: {', '.join(unknown)}")
        config.update(loaded)
    for key in FLAG_KEYS + ("resume",):
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    return config


def _source(config: dict) -> str:
    """Which data source the config names; exactly one must be present."""
    given = [k for k in ("ppi", "targets", "combo") if config[k]]
    if config["synthetic"]:
        if given:
            raise ArgumentError("config names both file paths and a synthetic source")
        return "synthetic"
    if not given:
        raise ArgumentError("config names no data source: set ppi/targets/combo "
                            "paths or synthetic=true")
    missing = [k for k in ("ppi", "targets", "combo") if not config[k]]
    if missing:
        raise ArgumentError(f"file source is missing paths: {', '.join(missing)}")
    return "files"


def _ingest_paths(config: dict) -> IngestPaths:
    return IngestPaths(ppi=config["ppi"], targets=config["targets"],
                       combo=config["combo"], mono=config["mono"] or None)


def _synthetic_spec(config: dict) -> SyntheticSpec:
    return SyntheticSpec(
        n_drugs=config["n_drugs"],
        n_proteins=config["n_proteins"],
        n_side_effects=config["n_side_effects"],
        latent_dim=config["latent_dim"],
        side_effect_density=config["side_effect_density"],
        ppi_density=config["ppi_density"],
        target_density=config["target_density"],
        feature_width=config["feature_width"],
        feature_flip_rate=config["feature_flip_rate"],
        sharpness=config["sharpness"],
        seed=config["spec_seed"],
    )


def _train_config(config: dict) -> TrainConfig:
    return TrainConfig(
        hidden_dims=tuple(config["hidden_dims"]),
        learning_rate=config["learning_rate"],
        max_epochs=config["max_epochs"],
        batch_size=config["batch_size"],
        dropout=config["dropout"],
        early_stop_window=config["early_stop_window"],
        negatives_per_positive=config["negatives_per_positive"],
        final_activation=config["final_activation"],
        early_stop_metric=config["early_stop_metric"],
        embedding_dim=config["embedding_dim"],
        precision=config["precision"],
    ).validated()


def _build_graph(config: dict):
    """Graph plus the ingest report when reading files (None for synthetic)."""
    if _source(config) == "synthetic":
        graph, _ = generate(_synthetic_spec(config).validated())
        return graph, None
    graph, report = ingest(_ingest_paths(config), config["min_relation_count"])
    return graph, report


def _rebuild_model(graph: MultimodalGraph, split, config: dict):
    tconf = _train_config(config)
    if config["model"] == "main":
        return GraphConvModel(graph, split.train_pos, tconf)
    return FactorModel(graph, tconf, config["model"])


def _load_fitted(config: dict):
    """Graph, split, model adapter, parameters, embeddings for a finished run."""
    graph, _ = _build_graph(config)
    split = split_edges(graph, seed=config["seed"])
    model = _rebuild_model(graph, split, config)
    store = load_checkpoint(os.path.join(config["out"], CHECKPOINT_FILE),
                            dtype=_train_config(config).dtype,
                            expect_model=config["model"])
    try:
        embeddings = model.embeddings(store, Tape(record=False), training=False)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(
            "checkpoint does not match the configured model or sizes") from exc
    return graph, split, model, store, embeddings


def _diagonal_vectors(store, graph: MultimodalGraph, model_name: str) -> dict:
    prefix = {"main": "dec/D", "dedicom": "fac/U"}.get(model_name)
    if prefix is None:
        return {}
    return {rel.relation_id: store[f"{prefix}/{rel.relation_id}"].values[0].copy()
            for rel in graph.side_effect_relations()}


# -- commands -----------------------------------------------------------------


def cmd_ingest(config: dict) -> None:
    if _source(config) != "files":
        raise ArgumentError("ingest reads CSV files: set ppi/targets/combo paths")
    graph, report = _build_graph(config)
    write_ingest_report(os.path.join(config["out"], "ingest_report.csv"), report)
    print(f"drugs: {graph.n_drugs}")
    print(f"proteins: {graph.n_proteins}")
    print(f"relations: {len(graph.relations)}")
    for line in report.warnings:
        print(f"warning: {line}")


def cmd_synth(config: dict) -> None:
    if _source(config) != "synthetic":
        raise ArgumentError("synth generates data: set synthetic=true, not file paths")
    graph, _ = generate(_synthetic_spec(config).validated())
    paths = write_synthetic_dataset(config["out"], graph)
    for name in ("ppi", "targets", "combo", "mono"):
        print(f"{name}: {getattr(paths, name)}")


def cmd_train(config: dict) -> None:
    graph, _ = _build_graph(config)
    split = split_edges(graph, seed=config["seed"])
    tconf = _train_config(config)
    out = config["out"]
    resume_from = None
    if config["resume"]:
        resume_from = load_checkpoint(os.path.join(out, CHECKPOINT_FILE),
                                      dtype=tconf.dtype,
                                      expect_model=config["model"])
    if config["model"] == "main":
        result = train(graph, split, tconf, seed=config["seed"],
                       resume_from=resume_from)
    else:
        result = train_baseline(graph, split, tconf, seed=config["seed"],
                                flavor=config["model"], resume_from=resume_from)
    save_checkpoint(os.path.join(out, CHECKPOINT_FILE), result.store,
                    model=config["model"])
    write_train_log(os.path.join(out, "train_log.csv"), result.history)
    write_split_manifest(os.path.join(out, "split_manifest.csv"), graph, split)
    print(f"epochs: {len(result.history)}")
    print(f"best_epoch: {result.best_epoch}")
    print(f"best_val: {result.best_value}")


def cmd_evaluate(config: dict) -> None:
    graph, split, model, store, embeddings = _load_fitted(config)
    fold = config["fold"]
    probability_fn = None if config["model"] == "main" else model.probabilities
    report = evaluate(store, graph, split, embeddings, fold=fold,
                      probability_fn=probability_fn)
    write_eval_report(os.path.join(config["out"], f"eval_{fold}.csv"), report)
    print(f"fold: {fold}")
    print(f"macro_auroc: {report.macro_auroc}")
    print(f"macro_auprc: {report.macro_auprc}")
    print(f"macro_ap50: {report.macro_ap50}")


def cmd_predict(config: dict) -> None:
    graph, split, model, store, embeddings = _load_fitted(config)
    k = config["top_k"]
    if k < 1:
        raise ArgumentError(f"top-k must be positive, got {k}")
    bilinear_fn = None if config["model"] == "main" else model.effective_bilinear
    scored = []
    for rel in graph.side_effect_relations():
        scored.extend(top_pairs(store, rel, embeddings, k,
                                exclude=graph.edges(rel), bilinear_fn=bilinear_fn))
    scored.sort(key=lambda s: (-s.probability, s.relation_id, s.i, s.j))
    write_predictions(os.path.join(config["out"], "predictions.csv"),
                      graph, scored[:k])
    print(f"candidates: {min(k, len(scored))}")


def cmd_stats(config: dict) -> None:
    graph, report = _build_graph(config)
    out = config["out"]
    seed = config["seed"]
    table = CooccurrenceTable.from_graph(graph)
    focus = config["focus"] or table.top_relations(1)[0]

    rows = []
    for source in ("random_pairs", "combo_pairs"):
        fractions = jaccard_strata(graph, source, seed=seed)
        rows.extend((source, name, fractions[name]) for name in fractions)
    fractions = jaccard_strata(graph, "combo_pairs_with", relation_id=focus)
    rows.extend((f"combo_pairs_with:{focus}", name, fractions[name])
                for name in fractions)
    write_strata_table(os.path.join(out, "jaccard_strata.csv"), rows)

    findings = cooccurrence_test(table, focus,
                                 n_permutations=config["n_permutations"],
                                 alpha=config["alpha"], seed=seed)
    names = report.side_effect_names if report is not None else {}
    write_verdict_table(os.path.join(out, "cooccurrence_verdicts.csv"),
                        findings, names)
    write_verdict_summary(os.path.join(out, "verdict_summary.csv"),
                          findings, names)
    print(f"focus: {focus}")
    print(f"tested: {len(findings)}")

    checkpoint = os.path.join(out, CHECKPOINT_FILE)
    vectors = {}
    if os.path.exists(checkpoint):
        store = load_checkpoint(checkpoint, expect_model=config["model"])
        vectors = _diagonal_vectors(store, graph, config["model"])
    if vectors:
        ks = embedding_cooccurrence_distance(vectors, table,
                                             k=config["distance_k"], seed=seed)
        write_csv(os.path.join(out, "embedding_distance.csv"),
                  ("statistic", "p_value", "n_top", "n_random", "k"),
                  [(ks.statistic, ks.p_value, ks.n1, ks.n2, config["distance_k"])])
        print(f"embedding_distance: {ks.statistic}")
    else:
        print("embedding_distance: skipped (no per-relation vectors)")


def cmd_export_embeddings(config: dict) -> None:
    graph, split, model, store, embeddings = _load_fitted(config)
    out = config["out"]
    arrays = {kind: tensor.values for kind, tensor in embeddings.items()}
    write_embeddings(os.path.join(out, "embeddings.csv"), graph, arrays)
    vectors = _diagonal_vectors(store, graph, config["model"])
    if vectors:
        write_relation_diagonals(os.path.join(out, "relation_diagonals.csv"), vectors)
        print("diagonals: relation_diagonals.csv")
    else:
        print("diagonals: skipped (model has per-relation cores, not diagonals)")
    print(f"nodes: {sum(arr.shape[0] for arr in arrays.values())}")


HANDLERS = {
    "ingest": cmd_ingest,
    "synth": cmd_synth,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "stats": cmd_stats,
    "export-embeddings": cmd_export_embeddings,
}


def _check_thread_cap() -> None:
    value = os.environ.get("POLYLINK_THREADS")
    if value is None:
        return
    if not value.isdigit() or int(value) < 1:
        raise ArgumentError(f"POLYLINK_THREADS must be a positive integer, got {value!r}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _check_thread_cap()
        config = resolve_config(args)
        os.makedirs(config["out"], exist_ok=True)
        print(f"seed: {config['seed']}")
        print(f"config: {config_digest(config)}")
        HANDLERS[args.command](config)
    except PolylinkError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
