"""
HrPCA CSV IO — 레벨 행렬, 라벨, 점수 CSV 읽기/쓰기
===================================================
모든 CSV: UTF-8, 헤더 행, 첫 열 row_id, 실수는 최단 왕복 표기 (repr).
쓰기는 임시 파일 → os.replace 로 원자적. 읽는 쪽은 부분 파일을 보지 않는다.

    <level>.csv          row_id[, timestamp], feature_00, ...
    <level>.labels.csv   row_id, label (0/1)
    <level>.scores.csv   row_id, score, flagged (0/1)
"""

from __future__ import annotations

import io
import logging
import os
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd

from src.errors import ParseError, StorageError
from src.linalg_core import FeatureMatrix

logger = logging.getLogger(__name__)

ROW_ID = "row_id"
TIMESTAMP = "timestamp"


# ── 원자적 쓰기 ──────────────────────────────────────────────────

def atomic_write_text(path: str | Path, text: str) -> Path:
    """같은 디렉터리의 임시 파일에 쓴 뒤 rename."""
    path = Path(path)
    tmp_name = None
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile(
            "w", encoding="utf-8", newline="", dir=path.parent,
            prefix=f".{path.name}.", suffix=".tmp", delete=False,
        ) as tmp:
            tmp_name = tmp.name
            tmp.write(text)
        os.replace(tmp_name, path)
    except OSError as e:
        if tmp_name and os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise StorageError(f"cannot write file: {e.strerror or e}", str(path)) from e
    logger.info("wrote %s", path)
    return path


def write_frame(frame: pd.DataFrame, path: str | Path) -> Path:
    buf = io.StringIO()
    # float_format=None → repr, 최단 왕복
    frame.to_csv(buf, index=False, lineterminator="\n")
    return atomic_write_text(path, buf.getvalue())


def _read(path: str | Path, **kwargs) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"input file not found: {path}")
    try:
        return pd.read_csv(path, float_precision="round_trip", **kwargs)
    except pd.errors.EmptyDataError as e:
        raise ParseError("empty CSV", str(path)) from e
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise ParseError(f"unreadable CSV: {e}", str(path)) from e


def _require(frame: pd.DataFrame, columns: list[str], path) -> None:
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise ParseError(f"missing columns: {', '.join(missing)}", str(path))


# ── 행렬 ─────────────────────────────────────────────────────────

def write_matrix(x: FeatureMatrix, path: str | Path, timestamps=None) -> Path:
    frame = x.to_frame()
    if timestamps is not None:
        frame.insert(1, TIMESTAMP, [str(t) for t in timestamps])
    return write_frame(frame, path)


def read_matrix(path: str | Path) -> tuple[FeatureMatrix, pd.Series | None]:
    """(행렬, timestamp 열 또는 None). timestamp는 feature가 아니다."""
    frame = _read(path, dtype={ROW_ID: str})
    _require(frame, [ROW_ID], path)
    stamps = None
    if TIMESTAMP in frame.columns:
        try:
            stamps = pd.to_datetime(frame[TIMESTAMP], utc=True, format="ISO8601")
        except (ValueError, TypeError) as e:
            raise ParseError(f"bad timestamp column: {e}", str(path)) from e
    features = [c for c in frame.columns if c not in (ROW_ID, TIMESTAMP)]
    try:
        values = frame[features].to_numpy(dtype=np.float64)
    except (ValueError, TypeError) as e:
        raise ParseError(f"non-numeric feature value: {e}", str(path)) from e
    if values.size and not np.all(np.isfinite(values)):
        bad = np.argwhere(~np.isfinite(values))[0]
        raise ParseError(
            f"non-finite value in column '{features[bad[1]]}'", f"{path}:{int(bad[0]) + 2}"
        )
    matrix = FeatureMatrix(values.reshape(len(frame), len(features)), tuple(features),
                           tuple(frame[ROW_ID].astype(str)))
    return matrix, stamps


# ── 라벨 ─────────────────────────────────────────────────────────

def write_labels(row_ids, labels, path: str | Path) -> Path:
    frame = pd.DataFrame({ROW_ID: list(row_ids), "label": np.asarray(labels, dtype=np.int8)})
    return write_frame(frame, path)


def read_labels(path: str | Path) -> tuple[tuple[str, ...], np.ndarray]:
    frame = _read(path, dtype={ROW_ID: str})
    _require(frame, [ROW_ID, "label"], path)
    if not frame["label"].isin([0, 1]).all():
        raise ParseError("labels must be 0 or 1", str(path))
    return tuple(frame[ROW_ID].astype(str)), frame["label"].to_numpy().astype(bool)


# ── 점수 ─────────────────────────────────────────────────────────

def write_scores(row_ids, scores, flagged, path: str | Path) -> Path:
    frame = pd.DataFrame({
        ROW_ID: list(row_ids),
        "score": np.asarray(scores, dtype=np.float64),
        "flagged": np.asarray(flagged, dtype=np.int8),
    })
    return write_frame(frame, path)


def read_scores(path: str | Path) -> tuple[tuple[str, ...], np.ndarray, np.ndarray]:
    frame = _read(path, dtype={ROW_ID: str})
    _require(frame, [ROW_ID, "score", "flagged"], path)
    return (
        tuple(frame[ROW_ID].astype(str)),
        frame["score"].to_numpy(dtype=np.float64),
        frame["flagged"].to_numpy().astype(bool),
    )
