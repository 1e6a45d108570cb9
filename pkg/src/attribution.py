"""
HrPCA Attribution — 고유벡터 역추적 + 변경 로그 주석
=====================================================
플래그된 행을 모델 모드(고유벡터) 방향으로 분해해서 어떤 모드와 feature가
이상을 만들었는지 추적한다.
    p_j = (x − μ)·u_j            모드별 사영 점수
    z_j = |p_j − mean_j| / std_j  학습 분포 기준 표준화
z_j가 임계값(기본 3.0)을 넘는 모드 중 최대가 지배 모드.

잔차 S 쪽 기여(|s_i|)와 계층 역추적(부모 → 점수가 가장 큰 자식)도 여기서 한다.
변경 로그 상관은 시간 창(기본 24h) 안의 가장 최근 이벤트 하나를 붙인다.
"""

from __future__ import annotations

import bisect
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import pandas as pd

from src.errors import InvalidInput, ParseError, SchemaMismatch, ShapeError
from src.hierarchy import LevelDataset
from src.hrpca_model import LevelModel, check_schema
from src.linalg_core import FeatureMatrix

logger = logging.getLogger(__name__)

# ── 기본값 ───────────────────────────────────────────────────────
DEFAULT_Z_THRESHOLD = 3.0
DEFAULT_TOP_K = 3
DEFAULT_WINDOW = pd.Timedelta(hours=24)
Z_SENTINEL = float("inf")        # std = 0 이고 p ≠ mean 일 때의 z
CHANGE_LOG_COLUMNS = ("timestamp", "description")


# ── 타입 ─────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ProjectionStats:
    """학습 집합에서 모드별 p_j 평균/표준편차."""
    mean: np.ndarray
    std: np.ndarray

    @property
    def n_modes(self) -> int:
        return int(self.mean.size)


@dataclass(frozen=True)
class ChangeLogEvent:
    timestamp: Any               # pd.Timestamp (UTC) 또는 비교 가능한 값
    description: str


@dataclass(frozen=True)
class AttributionRecord:
    row_id: str
    projections: tuple[float, ...]
    z_scores: tuple[float, ...]
    dominant_mode: int | None
    dominant_z: float | None
    top_features: tuple[tuple[str, float], ...]
    residual_features: tuple[tuple[str, float], ...] = ()
    score: float | None = None
    timestamp: Any = None
    annotation_tag: str = ""


@dataclass
class ProjectionSeries:
    """모드별 평균 |p_j| 시계열. values[t, j]."""
    timestamps: list = field(default_factory=list)
    values: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    skipped: list = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        n_modes = self.values.shape[1] if self.values.ndim == 2 else 0
        frame = pd.DataFrame(self.values, columns=[f"mode_{j}" for j in range(n_modes)])
        frame.insert(0, "timestamp", self.timestamps)
        return frame


# ── 사영 ─────────────────────────────────────────────────────────

def projection_scores(model: LevelModel, row) -> np.ndarray:
    """p_j = (row − μ)·u_j."""
    x = np.asarray(row, dtype=np.float64).reshape(-1)
    if x.size != model.n_features:
        raise SchemaMismatch(
            f"[{model.level_name}] row has {x.size} values, model expects {model.n_features}"
        )
    return (x - model.col_means) @ model.basis_u


def _projection_matrix(model: LevelModel, x: FeatureMatrix) -> np.ndarray:
    check_schema(model, x)
    return (x.values - model.col_means) @ model.basis_u


def reference_stats(model: LevelModel, x_train: FeatureMatrix) -> ProjectionStats:
    proj = _projection_matrix(model, x_train)
    if proj.shape[0] == 0:
        raise InvalidInput("reference_stats needs at least one training row")
    return ProjectionStats(mean=proj.mean(axis=0), std=proj.std(axis=0))


def mode_z_scores(projections, stats: ProjectionStats) -> np.ndarray:
    p = np.asarray(projections, dtype=np.float64).reshape(-1)
    if p.size != stats.n_modes:
        raise ShapeError(f"{p.size} projections vs {stats.n_modes} reference modes")
    dev = np.abs(p - stats.mean)
    safe = np.where(stats.std > 0, stats.std, 1.0)
    return np.where(stats.std > 0, dev / safe, np.where(dev > 0, Z_SENTINEL, 0.0))


def dominant_mode(
    projections, stats: ProjectionStats, z_threshold: float = DEFAULT_Z_THRESHOLD
) -> tuple[int, float] | None:
    """max z_j > z_threshold 인 모드 (동률은 낮은 인덱스). 없으면 None."""
    z = mode_z_scores(projections, stats)
    if z.size == 0:
        return None
    j = int(np.argmax(z))
    if z[j] > z_threshold:
        return j, float(z[j])
    return None


def _ranked(names: Sequence[str], weights: np.ndarray, k: int) -> list[tuple[str, float]]:
    # 가중치 내림차순, 동률은 feature 인덱스 오름차순
    order = np.lexsort((np.arange(weights.size), -weights))
    return [(names[i], float(weights[i])) for i in order[:k]]


def top_features(model: LevelModel, mode: int, k: int = DEFAULT_TOP_K) -> list[tuple[str, float]]:
    """|u_{mode,i}| 순위."""
    if not 0 <= mode < model.rank:
        raise InvalidInput(f"mode {mode} out of range for rank {model.rank}")
    if k < 1:
        raise InvalidInput(f"k must be >= 1, got {k}")
    return _ranked(model.feature_names, np.abs(model.basis_u[:, mode]), k)


def reconstruct_from_modes(model: LevelModel, projections) -> np.ndarray:
    """μ + Σ_j p_j u_j."""
    p = np.asarray(projections, dtype=np.float64).reshape(-1)
    if p.size != model.rank:
        raise ShapeError(f"{p.size} projections for a rank-{model.rank} model")
    return model.col_means + model.basis_u @ p


def residual_features(model: LevelModel, row, k: int = DEFAULT_TOP_K) -> list[tuple[str, float]]:
    """행 잔차 |s_i| 순위."""
    if k < 1:
        raise InvalidInput(f"k must be >= 1, got {k}")
    centered = np.asarray(row, dtype=np.float64).reshape(-1) - model.col_means
    p = projection_scores(model, row)
    residual = centered - model.basis_u @ p
    return _ranked(model.feature_names, np.abs(residual), k)


def attribute_rows(
    model: LevelModel,
    x: FeatureMatrix,
    stats: ProjectionStats,
    z_threshold: float = DEFAULT_Z_THRESHOLD,
    k: int = DEFAULT_TOP_K,
    timestamps: Sequence | None = None,
    rows: Sequence[int] | None = None,
    scores: np.ndarray | None = None,
) -> list[AttributionRecord]:
    """행마다 사영 → 지배 모드 → top feature (지배 모드가 없으면 잔차 기준)."""
    proj = _projection_matrix(model, x)
    if timestamps is not None and len(timestamps) != x.n_rows:
        raise ShapeError(f"{len(timestamps)} timestamps for {x.n_rows} rows")
    indices = range(x.n_rows) if rows is None else rows
    records = []
    for i in indices:
        z = mode_z_scores(proj[i], stats)
        dom = dominant_mode(proj[i], stats, z_threshold)
        resid = residual_features(model, x.values[i], min(k, model.n_features))
        feats = top_features(model, dom[0], min(k, model.n_features)) if dom else resid
        records.append(AttributionRecord(
            row_id=x.row_ids[i],
            projections=tuple(float(v) for v in proj[i]),
            z_scores=tuple(float(v) for v in z),
            dominant_mode=dom[0] if dom else None,
            dominant_z=dom[1] if dom else None,
            top_features=tuple(feats),
            residual_features=tuple(resid),
            score=None if scores is None else float(scores[i]),
            timestamp=None if timestamps is None else timestamps[i],
        ))
    return records


# ── 시계열 ───────────────────────────────────────────────────────

def projection_series(
    model: LevelModel, batches: Sequence[tuple[Any, FeatureMatrix]]
) -> ProjectionSeries:
    """배치마다 모드별 평균 |p_j|. 빈 배치는 건너뛰고 skipped에 기록."""
    series = ProjectionSeries(values=np.zeros((0, model.rank)))
    rows = []
    previous = None
    for ts, batch in batches:
        if previous is not None and ts < previous:
            raise InvalidInput("batches must be in time order")
        previous = ts
        if batch.n_rows == 0:
            logger.warning("[%s] empty batch at %s skipped", model.level_name, ts)
            series.skipped.append(ts)
            continue
        rows.append(np.abs(_projection_matrix(model, batch)).mean(axis=0))
        series.timestamps.append(ts)
    if rows:
        series.values = np.vstack(rows)
    return series


# ── 변경 로그 ─────────────────────────────────────────────────────

def load_change_log(path: str | Path) -> list[ChangeLogEvent]:
    """CSV timestamp,description → UTC 정렬 이벤트 리스트."""
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype={"description": str}, keep_default_na=False)
    except pd.errors.EmptyDataError as e:
        raise ParseError("change log is empty (no header)", str(path)) from e
    except pd.errors.ParserError as e:
        raise ParseError(f"unreadable change log: {e}", str(path)) from e
    missing = [c for c in CHANGE_LOG_COLUMNS if c not in frame.columns]
    if missing:
        raise ParseError(f"change log missing columns: {', '.join(missing)}", str(path))
    try:
        stamps = pd.to_datetime(frame["timestamp"], utc=True, format="ISO8601")
    except (ValueError, TypeError) as e:
        raise ParseError(f"bad change-log timestamp: {e}", str(path)) from e
    frame = frame.assign(timestamp=stamps).sort_values("timestamp", kind="stable")
    return [
        ChangeLogEvent(timestamp=ts, description=str(desc))
        for ts, desc in zip(frame["timestamp"], frame["description"])
    ]


def _nearest_event(events: Sequence[ChangeLogEvent], times: list, t, window) -> ChangeLogEvent | None:
    idx = bisect.bisect_right(times, t) - 1
    if idx < 0:
        return None
    if t - times[idx] <= window:
        return events[idx]
    return None


def _tag(record: AttributionRecord, mode_names: Mapping[int, str] | None) -> str:
    if record.dominant_mode is None:
        head = "residual"
    else:
        head = f"mode {record.dominant_mode}"
        label = (mode_names or {}).get(record.dominant_mode)
        if label:
            head += f" ({label})"
    feature = record.top_features[0][0] if record.top_features else "-"
    return f"{head} / feature {feature}"


def annotate(
    records: Sequence[AttributionRecord],
    events: Sequence[ChangeLogEvent] = (),
    window=DEFAULT_WINDOW,
    mode_names: Mapping[int, str] | None = None,
) -> list[AttributionRecord]:
    """annotation_tag 채우기. 창 안의 가장 최근 이벤트를 '; near change: ...'로 붙인다."""
    times = [ev.timestamp for ev in events]
    if any(b < a for a, b in zip(times, times[1:])):
        raise InvalidInput("change-log events must be sorted by timestamp")
    out = []
    for rec in records:
        tag = _tag(rec, mode_names)
        if rec.timestamp is not None and events:
            ev = _nearest_event(events, times, rec.timestamp, window)
            if ev is not None:
                tag += f"; near change: {ev.description}"
        out.append(replace(rec, annotation_tag=tag))
    return out


def records_to_frame(records: Sequence[AttributionRecord]) -> pd.DataFrame:
    """CSV용. dominant_mode가 없으면 빈 칸."""
    n_modes = len(records[0].projections) if records else 0
    rows = []
    for rec in records:
        row = {
            "row_id": rec.row_id,
            "timestamp": "" if rec.timestamp is None else str(rec.timestamp),
            "score": rec.score,
            "dominant_mode": rec.dominant_mode,
            "dominant_z": rec.dominant_z,
        }
        row.update({f"p_{j}": v for j, v in enumerate(rec.projections)})
        row.update({f"z_{j}": v for j, v in enumerate(rec.z_scores)})
        row["top_features"] = ";".join(f"{name}:{w!r}" for name, w in rec.top_features)
        row["annotation_tag"] = rec.annotation_tag
        rows.append(row)
    columns = (
        ["row_id", "timestamp", "score", "dominant_mode", "dominant_z"]
        + [f"p_{j}" for j in range(n_modes)]
        + [f"z_{j}" for j in range(n_modes)]
        + ["top_features", "annotation_tag"]
    )
    frame = pd.DataFrame(rows, columns=columns)
    frame["dominant_mode"] = frame["dominant_mode"].astype("Int64")
    return frame


# ── 계층 역추적 ───────────────────────────────────────────────────

def trace_origin(
    levels: Sequence[LevelDataset],
    level_scores: Sequence[np.ndarray],
    level_index: int,
    row_index: int,
) -> list[tuple[str, str, float]]:
    """(level, row_id, score) 경로. 매 단계 점수가 가장 큰 자식을 따라 최하위 레벨까지."""
    if len(level_scores) != len(levels):
        raise InvalidInput(f"{len(level_scores)} score vectors for {len(levels)} levels")
    if not 0 <= level_index < len(levels):
        raise InvalidInput(f"level index {level_index} out of range")
    if not 0 <= row_index < levels[level_index].n_rows:
        raise InvalidInput(f"row {row_index} out of range for level '{levels[level_index].level_name}'")

    def step(lvl: int, row: int) -> tuple[str, str, float]:
        ds = levels[lvl]
        return ds.level_name, ds.matrix.row_ids[row], float(np.asarray(level_scores[lvl])[row])

    path = [step(level_index, row_index)]
    row = row_index
    for lvl in range(level_index, 0, -1):
        child = levels[lvl - 1]
        if child.parent_of is None:
            raise InvalidInput(f"level '{child.level_name}' has no parent map")
        kids = child.children_of(row)
        if kids.size == 0:
            raise InvalidInput(f"row {row} of '{levels[lvl].level_name}' has no children")
        child_scores = np.asarray(level_scores[lvl - 1])[kids]
        row = int(kids[int(np.argmax(child_scores))])
        path.append(step(lvl - 1, row))
    return path
