"""
HrPCA Evaluation Metrics — 혼동 행렬, Precision/Recall/F1, 임계값 스윕
======================================================================
    Precision = TP / (TP + FP)
    Recall    = TP / (TP + FN)
    F1        = 2·P·R / (P + R)
분모가 0이면 세 지표 모두 0 (0/0 → 0 규약). 반올림은 출력 경계에서만 (소수 둘째 자리).

레벨별 최적 임계값 표 (Level, Threshold, Precision, Recall, F1) 와
규칙 기반 기준선(열별 3-sigma 규칙) 비교표를 만든다.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Literal, Mapping, Sequence

import numpy as np
import pandas as pd
from sklearn.metrics import confusion_matrix
from tabulate import tabulate

from src.errors import InvalidInput, ShapeError
from src.hierarchy import LevelDataset
from src.hrpca_model import LevelModel, score
from src.linalg_core import FeatureMatrix

# ── 스윕/표 상수 ─────────────────────────────────────────────────
GRID_MARGIN = 1.0                # 기본 그리드 양 끝: min − 1, max + 1
REPORT_DECIMALS = 2
TABLE_HEADERS = ["Level", "Threshold", "Precision", "Recall", "F1"]
BASELINE_ZERO_STD_SCORE = 1e12   # 분산 0 열에서 평균과 다른 값의 z (유한 센티널)

TableFormat = Literal["csv", "table"]


# ── 혼동 행렬 + 지표 ─────────────────────────────────────────────

@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def _as_bool(values) -> np.ndarray:
    return np.asarray(values, dtype=bool).reshape(-1)


def confusion(flags, labels) -> Confusion:
    f, y = _as_bool(flags), _as_bool(labels)
    if f.size != y.size:
        raise ShapeError(f"{f.size} flags vs {y.size} labels")
    if f.size == 0:
        return Confusion()
    tn, fp, fn, tp = confusion_matrix(y, f, labels=[False, True]).ravel()
    return Confusion(tp=int(tp), fp=int(fp), fn=int(fn), tn=int(tn))


def _ratio(num: int, den: int) -> float:
    return num / den if den > 0 else 0.0


def precision(c: Confusion) -> float:
    return _ratio(c.tp, c.tp + c.fp)


def recall(c: Confusion) -> float:
    return _ratio(c.tp, c.tp + c.fn)


def f1_from_rates(p: float, r: float) -> float:
    """조화평균. P + R = 0 이면 0."""
    return 2.0 * p * r / (p + r) if (p + r) > 0 else 0.0


def f1(c: Confusion) -> float:
    return f1_from_rates(precision(c), recall(c))


# ── 임계값 스윕 ─────────────────────────────────────────────────

@dataclass(frozen=True)
class SweepResult:
    thresholds: np.ndarray
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    tn: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    best_index: int

    @property
    def best_threshold(self) -> float:
        return float(self.thresholds[self.best_index])

    @property
    def best_f1(self) -> float:
        return float(self.f1[self.best_index])

    def confusion_at(self, i: int) -> Confusion:
        return Confusion(int(self.tp[i]), int(self.fp[i]), int(self.fn[i]), int(self.tn[i]))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "threshold": self.thresholds,
            "tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
        })


def default_grid(scores: np.ndarray) -> np.ndarray:
    """서로 다른 정렬 점수의 중점 + 최솟값 아래 한 점 + 최댓값 위 한 점."""
    distinct = np.unique(scores)
    mids = (distinct[:-1] + distinct[1:]) / 2.0
    return np.concatenate(([distinct[0] - GRID_MARGIN], mids, [distinct[-1] + GRID_MARGIN]))


def threshold_sweep(scores, labels, grid: Sequence[float] | None = None) -> SweepResult:
    """그리드의 각 점에서 score > t 플래그 → 혼동 행렬 → P/R/F1.

    최적점은 F1 최대인 가장 작은 임계값. 최대 F1이 0이면 (양성 없음 등)
    아무것도 플래그하지 않는 가장 큰 그리드 점을 보고한다.
    """
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = _as_bool(labels)
    if s.size == 0:
        raise InvalidInput("threshold_sweep needs at least one score")
    if s.size != y.size:
        raise ShapeError(f"{s.size} scores vs {y.size} labels")
    if grid is None:
        t = default_grid(s)
    else:
        t = np.asarray(grid, dtype=np.float64).reshape(-1)
        if t.size == 0 or np.any(np.diff(t) < 0):
            raise InvalidInput("grid must be non-empty and ascending")

    # 정렬 한 번 + 누적 양성 수: t 마다 score > t 인 행은 정렬 뒤쪽 꼬리
    order = np.argsort(s, kind="stable")
    below = np.searchsorted(s[order], t, side="right")
    cum_pos = np.concatenate(([0], np.cumsum(y[order])))
    positives = int(cum_pos[-1])
    tp = positives - cum_pos[below]
    fp = (s.size - below) - tp
    fn = positives - tp
    tn = (s.size - positives) - fp

    with np.errstate(divide="ignore", invalid="ignore"):
        prec = np.where(tp + fp > 0, tp / np.maximum(tp + fp, 1), 0.0)
        rec = np.where(tp + fn > 0, tp / np.maximum(tp + fn, 1), 0.0)
        f = np.where(prec + rec > 0, 2.0 * prec * rec / np.where(prec + rec > 0, prec + rec, 1.0), 0.0)

    best = int(np.argmax(f)) if f.max() > 0 else t.size - 1
    return SweepResult(
        thresholds=t, tp=tp, fp=fp, fn=fn, tn=tn,
        precision=prec, recall=rec, f1=f, best_index=best,
    )


# ── 계층 평가 ───────────────────────────────────────────────────

@dataclass(frozen=True)
class LevelPerformance:
    """Table-1 형태의 한 행."""
    level: str
    threshold: float
    precision: float
    recall: float
    f1: float
    n_rows: int
    n_positive: int
    sweep: SweepResult


def _performance(level: str, scores: np.ndarray, labels: np.ndarray) -> LevelPerformance:
    sweep = threshold_sweep(scores, labels)
    i = sweep.best_index
    return LevelPerformance(
        level=level,
        threshold=sweep.best_threshold,
        precision=float(sweep.precision[i]),
        recall=float(sweep.recall[i]),
        f1=float(sweep.f1[i]),
        n_rows=int(scores.size),
        n_positive=int(np.count_nonzero(labels)),
        sweep=sweep,
    )


def _model_map(models: Mapping[str, LevelModel] | Sequence[LevelModel]) -> dict[str, LevelModel]:
    if isinstance(models, Mapping):
        return dict(models)
    return {m.level_name: m for m in models}


def evaluate_hierarchy(
    models: Mapping[str, LevelModel] | Sequence[LevelModel],
    test_chain: Sequence[LevelDataset],
) -> list[LevelPerformance]:
    """레벨마다 점수 → 스윕 → 최적 행."""
    by_level = _model_map(models)
    rows = []
    for ds in test_chain:
        if ds.labels is None:
            raise InvalidInput(f"[{ds.level_name}] test data has no labels")
        model = by_level.get(ds.level_name)
        if model is None:
            raise InvalidInput(f"no model for level '{ds.level_name}'")
        rows.append(_performance(ds.level_name, score(model, ds.matrix), ds.labels))
    return rows


# ── 규칙 기반 기준선 ─────────────────────────────────────────────

def rule_baseline_scores(x_train: FeatureMatrix, x: FeatureMatrix) -> np.ndarray:
    """열별 |z| (학습 평균/표준편차 기준)의 행 최댓값."""
    if x_train.col_names != x.col_names:
        raise ShapeError("baseline train/test columns differ")
    mean = x_train.values.mean(axis=0)
    std = x_train.values.std(axis=0)
    dev = np.abs(x.values - mean)
    safe = np.where(std > 0, std, 1.0)
    z = np.where(std > 0, dev / safe, np.where(dev > 0, BASELINE_ZERO_STD_SCORE, 0.0))
    if z.shape[0] == 0:
        return np.zeros(0)
    return z.max(axis=1)


def evaluate_baseline(
    train_chain: Sequence[LevelDataset], test_chain: Sequence[LevelDataset]
) -> list[LevelPerformance]:
    train_by_level = {ds.level_name: ds for ds in train_chain}
    rows = []
    for ds in test_chain:
        if ds.labels is None:
            raise InvalidInput(f"[{ds.level_name}] test data has no labels")
        train = train_by_level.get(ds.level_name)
        if train is None:
            raise InvalidInput(f"no training data for level '{ds.level_name}'")
        rows.append(_performance(ds.level_name, rule_baseline_scores(train.matrix, ds.matrix), ds.labels))
    return rows


# ── 출력 ─────────────────────────────────────────────────────────

def performance_frame(rows: Sequence[LevelPerformance]) -> pd.DataFrame:
    return pd.DataFrame(
        [(r.level, r.threshold, r.precision, r.recall, r.f1) for r in rows],
        columns=["level", "threshold", "precision", "recall", "f1"],
    )


def format_table(rows: Sequence[LevelPerformance], fmt: TableFormat = "table") -> str:
    """csv: 전체 정밀도. table: 소수 둘째 자리 정렬 표."""
    if fmt == "csv":
        buf = io.StringIO()
        performance_frame(rows).to_csv(buf, index=False, lineterminator="\n")
        return buf.getvalue()
    if fmt != "table":
        raise InvalidInput(f"unknown table format: {fmt}")
    body = [
        (r.level.capitalize(), r.threshold, r.precision, r.recall, r.f1)
        for r in rows
    ]
    return tabulate(body, headers=TABLE_HEADERS, floatfmt=f".{REPORT_DECIMALS}f") + "\n"
