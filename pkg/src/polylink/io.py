"""Dataset ingestion, deterministic CSV writers, and config plumbing.

All CSV output is byte-stable: header row first, LF newlines, '.' decimal
floats via shortest round-trip repr, no locale or timestamp leakage.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, FormatError
from .graph import (
    PPI_RELATION_ID,
    TARGET_RELATION_ID,
    MultimodalGraph,
    NodeKind,
    build_graph,
    split_manifest_rows,
)

PPI_COLUMNS = ("Gene 1", "Gene 2")
TARGET_COLUMNS = ("STITCH", "Gene")
COMBO_COLUMNS = ("STITCH 1", "STITCH 2", "Polypharmacy Side Effect", "Side Effect Name")
MONO_COLUMNS = ("STITCH", "Individual Side Effect", "Side Effect Name")


# -- ingestion -----------------------------------------------------------


@dataclass(frozen=True)
class IngestPaths:
    ppi: str
    targets: str
    combo: str
    mono: str | None = None


@dataclass
class FileIngest:
    path: str
    rows: int = 0
    blank: int = 0
    parse_dropped: int = 0
    duplicates: int = 0
    rejected: int = 0

    @property
    def kept(self) -> int:
        return self.rows - self.parse_dropped - self.duplicates - self.rejected


@dataclass
class IngestReport:
    """Row accounting per file plus the final graph inventory.

    Per file, ``rows`` (non-blank data rows) always equals kept +
    parse_dropped + duplicates + rejected.  Relations removed later by the
    min-count threshold are listed separately; their rows stay "kept"
    because they parsed cleanly.
    """

    files: dict
    issues: tuple
    relations_kept: int
    relations_dropped: tuple
    n_drugs: int
    n_proteins: int
    edge_counts: dict
    side_effect_names: dict
    warnings: tuple = ()

    def rows_for_csv(self):
        for source in ("ppi", "targets", "combo", "mono"):
            st = self.files.get(source)
            if st is None:
                continue
            yield (source, os.path.basename(st.path), st.rows, st.kept,
                   st.parse_dropped, st.duplicates, st.rejected, st.blank)


def _read_table(path: str, needed: tuple) -> tuple:
    """Parse one CSV; returns (records, FileIngest) with records as tuples
    of the needed columns in order."""
    stats = FileIngest(path=path)
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except FileNotFoundError:
        raise FormatError(f"{path}: file not found") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: missing header row") from None
        positions = []
        # tolerate spacing drift ("Gene 1" vs "Gene1") between file revisions
        despaced = [h.strip().replace(" ", "") for h in header]
        for col in needed:
            try:
                positions.append(despaced.index(col.replace(" ", "")))
            except ValueError:
                raise FormatError(f"{path}: missing column {col!r}") from None
        records = []
        width = max(positions) + 1
        for row in reader:
            if not row or all(not cell.strip() for cell in row):
                stats.blank += 1
                continue
            stats.rows += 1
            if len(row) < width:
                stats.parse_dropped += 1
                continue
            records.append(tuple(row[p].strip() for p in positions))
    return records, stats


def ingest(paths: IngestPaths, min_relation_count: int = 0):
    """Parse the four dataset files and assemble a graph.

    Returns ``(graph, report)``.  Column layouts are fixed: ppi (Gene 1,
    Gene 2), targets (STITCH, Gene), combo (STITCH 1, STITCH 2,
    Polypharmacy Side Effect, Side Effect Name), mono (STITCH, Individual
    Side Effect, Side Effect Name).  Identifiers are opaque strings,
    trimmed only.
    """
    ppi_records, ppi_stats = _read_table(paths.ppi, PPI_COLUMNS)
    target_records, target_stats = _read_table(paths.targets, TARGET_COLUMNS)
    combo_records, combo_stats = _read_table(paths.combo, COMBO_COLUMNS)
    if paths.mono is not None:
        mono_records, mono_stats = _read_table(paths.mono, MONO_COLUMNS)
    else:
        mono_records, mono_stats = [], None

    se_names = {}
    for _, _, se, name in combo_records:
        se_names.setdefault(se, name)

    graph = build_graph(ppi_records,
                        target_records,
                        [(a, b, se) for a, b, se, _ in combo_records],
                        [(d, f) for d, f, _ in mono_records],
                        min_relation_count=min_relation_count)
    build = graph.build_report

    files = {"ppi": ppi_stats, "targets": target_stats, "combo": combo_stats}
    if mono_stats is not None:
        files["mono"] = mono_stats
    source_key = {"ppi": "ppi", "target": "targets", "combo": "combo", "mono": "mono"}
    for issue in build.rejected:
        key = source_key[issue.source]
        if key in files:
            files[key].rejected += 1
    for source, count in build.duplicates.items():
        key = source_key[source]
        if key in files:
            files[key].duplicates = count

    warnings = []
    if not combo_records:
        warnings.append("combo file has no data rows; no side-effect relations")
    kept_ids = {r.relation_id for r in graph.side_effect_relations()}
    report = IngestReport(
        files=files,
        issues=build.rejected,
        relations_kept=len(kept_ids),
        relations_dropped=build.relations_dropped,
        n_drugs=graph.n_drugs,
        n_proteins=graph.n_proteins,
        edge_counts={r.relation_id: graph.edge_count(r) for r in graph.relations},
        side_effect_names={se: name for se, name in se_names.items() if se in kept_ids},
        warnings=tuple(warnings),
    )
    return graph, report


# -- deterministic CSV output ----------------------------------------------


def format_value(value) -> str:
    """Shortest round-trip text for floats; plain str otherwise."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_value(v) for v in row) + "\n")


def write_split_manifest(path, graph: MultimodalGraph, split) -> None:
    """Every fold assignment; ppi and target rows reuse the drug_i/drug_j
    columns for their own endpoint ids."""
    write_csv(path, ("relation_id", "drug_i", "drug_j", "fold", "label"),
              split_manifest_rows(graph, split))


def write_eval_report(path, report) -> None:
    """One row per relation plus a trailing unweighted macro row."""
    rows = [(r.relation_id, r.n_pos, r.n_neg, r.auroc, r.auprc, r.ap50)
            for r in report.rows]
    rows.append(("macro", sum(r.n_pos for r in report.rows),
                 sum(r.n_neg for r in report.rows), report.macro_auroc,
                 report.macro_auprc, report.macro_ap50))
    write_csv(path, ("relation_id", "n_pos", "n_neg", "auroc", "auprc", "ap50"), rows)


def write_predictions(path, graph: MultimodalGraph, scores) -> None:
    """Ranked candidate edges; node indices become external ids."""
    rows = []
    for rank, score in enumerate(scores, start=1):
        rel = graph.relation(score.relation_id)
        kind_a, kind_b = rel.endpoint_kinds()
        rows.append((rank, score.relation_id,
                     graph.node_ids(kind_a)[score.i],
                     graph.node_ids(kind_b)[score.j],
                     score.probability))
    write_csv(path, ("rank", "relation_id", "drug_i", "drug_j", "prob"), rows)


def write_embeddings(path, graph: MultimodalGraph, embeddings) -> None:
    dims = {kind: emb.shape[1] for kind, emb in embeddings.items()}
    width = max(dims.values())
    header = ("node_kind", "node_id") + tuple(f"z_{k}" for k in range(width))
    rows = []
    for kind in (NodeKind.DRUG, NodeKind.PROTEIN):
        emb = embeddings.get(kind)
        if emb is None:
            continue
        ids = graph.node_ids(kind)
        for idx, node_id in enumerate(ids):
            vec = emb[idx]
            pad = ("",) * (width - vec.shape[0])
            rows.append((kind.value, node_id) + tuple(float(v) for v in vec) + pad)
    write_csv(path, header, rows)


def write_relation_diagonals(path, diagonals: dict) -> None:
    """Per-relation scaling vectors, one row per side effect."""
    if not diagonals:
        raise ArgumentError("no relation vectors to write")
    width = len(next(iter(diagonals.values())))
    header = ("relation_id",) + tuple(f"d_{k}" for k in range(width))
    rows = [(rid,) + tuple(float(v) for v in vec)
            for rid, vec in sorted(diagonals.items())]
    write_csv(path, header, rows)


def write_train_log(path, history) -> None:
    """Epoch records; wall-clock seconds stay out so reruns are byte-equal.

    val_loss holds whatever the early-stopping criterion was (negated
    macro AUPRC when a metric was configured instead of the loss).
    """
    rows = [(r.epoch, r.train_loss, r.val_value) for r in history]
    write_csv(path, ("epoch", "train_loss", "val_loss"), rows)


def write_ingest_report(path, report: IngestReport) -> None:
    write_csv(path, ("source", "file", "rows", "kept", "parse_dropped",
                     "duplicates", "rejected", "blank"), report.rows_for_csv())


def write_strata_table(path, rows) -> None:
    """(source, stratum, fraction) rows, one histogram per pair source."""
    write_csv(path, ("pair_source", "stratum", "fraction"), rows)


def write_verdict_table(path, findings, names=None) -> None:
    """Per-pair permutation verdicts with optional relation display names."""
    names = names or {}
    rows = [(f.first, f.second, names.get(f.second, f.second), f.observed,
             f.null_mean, f.p_value, f.verdict) for f in findings]
    write_csv(path, ("focus", "relation_id", "relation_name", "observed",
                     "null_mean", "p_value", "verdict"), rows)


def write_verdict_summary(path, findings, names=None) -> None:
    """Verdict shares over all tested relations, one row per verdict, with
    the most extreme relation (smallest p) named as the example."""
    names = names or {}
    total = len(findings)
    rows = []
    for verdict in ("over", "under", "insignificant"):
        hits = sorted((f for f in findings if f.verdict == verdict),
                      key=lambda f: (f.p_value, f.second))
        example = names.get(hits[0].second, hits[0].second) if hits else ""
        fraction = len(hits) / total if total else 0.0
        rows.append((verdict, len(hits), fraction, example))
    write_csv(path, ("verdict", "count", "fraction", "example_relation"), rows)


# -- synthetic dataset export -------------------------------------------------


def write_synthetic_dataset(out_dir, graph: MultimodalGraph) -> IngestPaths:
    """Emit a generated graph in the exact ingestion formats (round-trips
    through :func:`ingest`)."""
    os.makedirs(out_dir, exist_ok=True)
    paths = IngestPaths(
        ppi=os.path.join(out_dir, "ppi.csv"),
        targets=os.path.join(out_dir, "targets.csv"),
        combo=os.path.join(out_dir, "combo.csv"),
        mono=os.path.join(out_dir, "mono.csv"),
    )
    ppi_rel = graph.relation(PPI_RELATION_ID)
    write_csv(paths.ppi, PPI_COLUMNS,
              ((graph.protein_ids[i], graph.protein_ids[j]) for i, j in graph.edges(ppi_rel)))
    tgt_rel = graph.relation(TARGET_RELATION_ID)
    write_csv(paths.targets, TARGET_COLUMNS,
              ((graph.drug_ids[i], graph.protein_ids[j]) for i, j in graph.edges(tgt_rel)))

    def combo_rows():
        for rel in graph.side_effect_relations():
            rid = rel.relation_id
            for i, j in graph.edges(rel):
                yield (graph.drug_ids[i], graph.drug_ids[j], rid, rid)

    write_csv(paths.combo, COMBO_COLUMNS, combo_rows())

    def mono_rows():
        if not graph.has_explicit_features(NodeKind.DRUG):
            return
        feats = graph.feature_matrix(NodeKind.DRUG).tocoo()
        order = np.lexsort((feats.col, feats.row))
        for k in order:
            yield (graph.drug_ids[feats.row[k]],
                   graph.drug_feature_names[feats.col[k]],
                   graph.drug_feature_names[feats.col[k]])

    write_csv(paths.mono, MONO_COLUMNS, mono_rows())
    return paths


# -- configuration --------------------------------------------------------------


def load_config(path) -> dict:
    """Flat JSON object of scalar values; anything else is a format error."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise FormatError(f"{path}: file not found") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(raw, dict):
        raise FormatError(f"{path}: config must be a JSON object")
    for key, value in raw.items():
        if isinstance(value, (dict,)):
            raise FormatError(f"{path}: config key {key!r} must be a scalar or list")
    return raw


def config_digest(config: dict) -> str:
    """sha256 over the canonical JSON form; changes iff any field changes."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()
