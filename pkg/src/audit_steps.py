"""
HrPCA Audit Steps — CLI 서브커맨드와 run 그래프가 공유하는 파이프라인 단계
=========================================================================
generate → fit → audit → sweep/evaluate → attribute → report.
각 단계는 디렉터리에서 읽고 디렉터리에 쓴다. 파일 배치:

    <out>/train/<level>.csv, <level>.labels.csv
    <out>/test/<level>.csv, <level>.labels.csv, <base>.mask.csv
    <out>/bundle.json
    <out>/audit/<level>.scores.csv, <level>.residuals.csv, audit_summary.csv
    <out>/audit/<level>.sweep.csv, evaluation.csv, evaluation.txt
    <out>/audit/<level>.attribution.csv
    <out>/report/<level>.heatmap.svg, .heatmap.csv, .scores.svg, .scoreplot.csv
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from src import csv_io
from src.attribution import (
    annotate,
    attribute_rows,
    load_change_log,
    records_to_frame,
    reference_stats,
    trace_origin,
)
from src.config import AttributionConfig, ExperimentConfig
from src.errors import InvalidInput, ShapeError
from src.evalmetrics import (
    LevelPerformance,
    SweepResult,
    evaluate_baseline,
    evaluate_hierarchy,
    format_table,
    performance_frame,
    threshold_sweep,
)
from src.hierarchy import LevelDataset
from src.hrpca_model import decompose, fit, flag, score
from src.model_store import ModelBundle, make_bundle, save_bundle
from src.report import write_level_report
from src.synthgen import generate_experiment_detailed

logger = logging.getLogger(__name__)

TRAIN_DIR = "train"
TEST_DIR = "test"
AUDIT_DIR = "audit"
REPORT_DIR = "report"
BUNDLE_FILE = "bundle.json"


@dataclass(frozen=True)
class AuditReport:
    """레벨별 감사 요약."""
    level: str
    threshold: float
    n_rows: int
    n_flagged: int
    max_score: float
    flagged_row_ids: tuple[str, ...]


# ── 데이터 디렉터리 ──────────────────────────────────────────────

def matrix_path(data_dir: Path, level: str) -> Path:
    return Path(data_dir) / f"{level}.csv"


def labels_path(data_dir: Path, level: str) -> Path:
    return Path(data_dir) / f"{level}.labels.csv"


def load_level(data_dir: Path, level: str, require_labels: bool = False) -> tuple[LevelDataset, pd.Series | None]:
    matrix, stamps = csv_io.read_matrix(matrix_path(data_dir, level))
    labels = None
    lpath = labels_path(data_dir, level)
    if lpath.exists():
        ids, labels = csv_io.read_labels(lpath)
        if ids != matrix.row_ids:
            raise ShapeError(f"[{level}] label row ids do not match {matrix_path(data_dir, level)}")
    elif require_labels:
        raise InvalidInput(f"[{level}] labels file not found: {lpath}")
    return LevelDataset(level, matrix, labels=labels), stamps


def load_chain(
    data_dir: Path, levels: Sequence[str], require_labels: bool = False
) -> tuple[list[LevelDataset], dict[str, pd.Series | None]]:
    """레벨 파일들을 읽고 행 수 비율로 parent_of 를 복원한다."""
    chain, stamps = [], {}
    for level in levels:
        ds, ts = load_level(data_dir, level, require_labels)
        chain.append(ds)
        stamps[level] = ts
    for child, parent in zip(chain, chain[1:]):
        if parent.n_rows and child.n_rows % parent.n_rows == 0:
            child.parent_of = np.arange(child.n_rows, dtype=np.intp) // (child.n_rows // parent.n_rows)
    return chain, stamps


def select_levels(bundle: ModelBundle, level: str | None) -> list[str]:
    names = bundle.level_names
    if level is None:
        return names
    if level not in names:
        raise InvalidInput(f"unknown level '{level}' (bundle levels: {', '.join(names)})")
    return [level]


# ── generate ─────────────────────────────────────────────────────

def generate_step(cfg: ExperimentConfig, out_dir: Path) -> list[Path]:
    exp = generate_experiment_detailed(cfg.generator, cfg.hierarchy)
    written = []
    for sub, chain in ((TRAIN_DIR, exp.train_chain), (TEST_DIR, exp.test_chain)):
        target = Path(out_dir) / sub
        for ds in chain:
            written.append(csv_io.write_matrix(ds.matrix, matrix_path(target, ds.level_name)))
            written.append(csv_io.write_labels(ds.matrix.row_ids, ds.labels, labels_path(target, ds.level_name)))
    base = exp.test_chain[0]
    mask = base.matrix.with_values(exp.injected_mask.astype(np.float64)).to_frame()
    mask[list(base.matrix.col_names)] = mask[list(base.matrix.col_names)].astype(np.int8)
    written.append(csv_io.write_frame(mask, Path(out_dir) / TEST_DIR / f"{base.level_name}.mask.csv"))
    logger.info("generated %d levels (seed %d) under %s", len(exp.test_chain), cfg.generator.seed, out_dir)
    return written


# ── fit ──────────────────────────────────────────────────────────

def fit_step(cfg: ExperimentConfig, train_dir: Path, bundle_path: Path) -> ModelBundle:
    chain, _ = load_chain(train_dir, cfg.hierarchy.levels)
    models = [fit(ds.matrix, cfg.fit, level_name=ds.level_name) for ds in chain]
    fingerprint = cfg.fingerprint()
    fingerprint["train_rows"] = {ds.level_name: ds.n_rows for ds in chain}
    bundle = make_bundle(models, fingerprint)
    save_bundle(bundle, bundle_path)
    return bundle


# ── audit ────────────────────────────────────────────────────────

def audit_step(
    bundle: ModelBundle,
    data_dir: Path,
    out_dir: Path,
    threshold: float | None = None,
    level: str | None = None,
) -> list[AuditReport]:
    """점수 + 플래그 + 잔차 CSV, 레벨 요약 audit_summary.csv."""
    reports = []
    for name in select_levels(bundle, level):
        model = bundle.level(name)
        ds, _ = load_level(data_dir, name)
        dec = decompose(model, ds.matrix)
        tau = model.threshold if threshold is None else threshold
        flags = flag(dec.scores, tau)
        csv_io.write_scores(ds.matrix.row_ids, dec.scores, flags, Path(out_dir) / f"{name}.scores.csv")
        csv_io.write_matrix(dec.sparse, Path(out_dir) / f"{name}.residuals.csv")
        reports.append(AuditReport(
            level=name,
            threshold=float(tau),
            n_rows=ds.n_rows,
            n_flagged=int(np.count_nonzero(flags)),
            max_score=float(dec.scores.max()) if dec.scores.size else 0.0,
            flagged_row_ids=tuple(rid for rid, f in zip(ds.matrix.row_ids, flags) if f),
        ))
    summary = pd.DataFrame(
        [(r.level, r.threshold, r.n_rows, r.n_flagged, r.max_score) for r in reports],
        columns=["level", "threshold", "n_rows", "n_flagged", "max_score"],
    )
    csv_io.write_frame(summary, Path(out_dir) / "audit_summary.csv")
    return reports


# ── sweep / evaluate ─────────────────────────────────────────────

def sweep_step(
    bundle: ModelBundle, data_dir: Path, out_dir: Path, level: str | None = None
) -> dict[str, SweepResult]:
    results = {}
    for name in select_levels(bundle, level):
        ds, _ = load_level(data_dir, name, require_labels=True)
        result = threshold_sweep(score(bundle.level(name), ds.matrix), ds.labels)
        csv_io.write_frame(result.to_frame(), Path(out_dir) / f"{name}.sweep.csv")
        results[name] = result
    return results


def evaluate_step(
    bundle: ModelBundle,
    data_dir: Path,
    out_dir: Path,
    train_dir: Path | None = None,
    level: str | None = None,
) -> tuple[list[LevelPerformance], list[LevelPerformance]]:
    """HrPCA 표 (+ train_dir 가 있으면 규칙 기준선 표)."""
    names = select_levels(bundle, level)
    test_chain, _ = load_chain(data_dir, names, require_labels=True)
    rows = evaluate_hierarchy(bundle.model_map(), test_chain)
    out = Path(out_dir)
    csv_io.write_frame(performance_frame(rows), out / "evaluation.csv")
    text = format_table(rows, "table")
    baseline = []
    if train_dir is not None:
        train_chain, _ = load_chain(train_dir, names)
        baseline = evaluate_baseline(train_chain, test_chain)
        csv_io.write_frame(performance_frame(baseline), out / "baseline_evaluation.csv")
        text += "\nRule baseline (per-column 3-sigma)\n" + format_table(baseline, "table")
    csv_io.atomic_write_text(out / "evaluation.txt", text)
    return rows, baseline


# ── attribute ────────────────────────────────────────────────────

def attribute_step(
    bundle: ModelBundle,
    data_dir: Path,
    out_dir: Path,
    attr_cfg: AttributionConfig,
    train_dir: Path | None = None,
    changelog: Path | None = None,
    threshold: float | None = None,
    level: str | None = None,
) -> dict[str, int]:
    """플래그된 행마다 AttributionRecord + 최하위 레벨까지의 역추적 경로."""
    chain, stamps = load_chain(data_dir, bundle.level_names)
    level_scores = [score(bundle.level(ds.level_name), ds.matrix) for ds in chain]
    events = load_change_log(changelog) if changelog else []
    counts = {}
    for name in select_levels(bundle, level):
        li = bundle.level_names.index(name)
        model, ds = bundle.level(name), chain[li]
        if train_dir is not None:
            reference, _ = load_level(train_dir, name)
        else:
            logger.warning("[%s] no training data given, using audited rows as projection reference", name)
            reference = ds
        stats = reference_stats(model, reference.matrix)
        tau = model.threshold if threshold is None else threshold
        rows = np.flatnonzero(flag(level_scores[li], tau))
        ts = stamps[name]
        records = attribute_rows(
            model, ds.matrix, stats,
            z_threshold=attr_cfg.z_threshold, k=attr_cfg.top_k,
            timestamps=None if ts is None else list(ts),
            rows=rows, scores=level_scores[li],
        )
        records = annotate(records, events, attr_cfg.window, attr_cfg.mode_names)
        frame = records_to_frame(records)
        frame["trace"] = [
            " > ".join(rid for _, rid, _ in trace_origin(chain, level_scores, li, int(r)))
            for r in rows
        ]
        csv_io.write_frame(frame, Path(out_dir) / f"{name}.attribution.csv")
        counts[name] = len(records)
    return counts


# ── report ───────────────────────────────────────────────────────

def report_step(
    bundle: ModelBundle,
    data_dir: Path,
    out_dir: Path,
    threshold: float | None = None,
    level: str | None = None,
) -> list[Path]:
    written = []
    for name in select_levels(bundle, level):
        model = bundle.level(name)
        ds, _ = load_level(data_dir, name)
        tau = model.threshold if threshold is None else threshold
        written.extend(write_level_report(name, decompose(model, ds.matrix), tau, out_dir))
    return written
