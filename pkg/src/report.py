"""
HrPCA Report — 잔차 히트맵 + 이상 점수 플롯 (SVG) 과 원본 CSV
==============================================================
히트맵: 행 × feature 격자, |S| 를 흑백 램프로 (0 = 흰색, max|S| = 검정).
    S ≡ 0 이면 vmax = 1 로 두어 균일한 흰 배경.
점수 플롯: 행 인덱스별 점수 선 + 임계값 수평선 하나.

matplotlib SVG 백엔드, 해시 솔트 고정 + Date 메타데이터 제거 → 같은 입력이면 같은 바이트.
"""

from __future__ import annotations

import io
import logging
from pathlib import Path

import matplotlib
import numpy as np
import pandas as pd
from matplotlib.figure import Figure

from src.csv_io import atomic_write_text, write_frame
from src.hrpca_model import Decomposition
from src.linalg_core import FeatureMatrix

logger = logging.getLogger(__name__)

# ── SVG 설정 ─────────────────────────────────────────────────────
SVG_HASH_SALT = "hrpca-audit"
SVG_RC = {"svg.hashsalt": SVG_HASH_SALT, "svg.fonttype": "none"}
HEATMAP_CMAP = "Greys"
HEATMAP_GID = "residual-heatmap"
THRESHOLD_GID = "threshold-rule"
SCORE_LINE_GID = "anomaly-score"
FIG_SIZE = (8.0, 4.5)


def _to_svg(fig: Figure) -> str:
    buf = io.StringIO()
    with matplotlib.rc_context(SVG_RC):
        fig.savefig(buf, format="svg", metadata={"Date": None})
    return buf.getvalue()


def heatmap_scale(sparse: np.ndarray) -> float:
    """흑백 램프 상한. 잔차가 전부 0이면 1."""
    top = float(np.abs(sparse).max()) if sparse.size else 0.0
    return top if top > 0 else 1.0


def residual_heatmap_svg(sparse: FeatureMatrix, title: str = "Residual heatmap") -> str:
    magnitude = np.abs(sparse.values)
    with matplotlib.rc_context(SVG_RC):
        fig = Figure(figsize=FIG_SIZE)
        ax = fig.add_subplot()
        mesh = ax.pcolormesh(
            magnitude, cmap=HEATMAP_CMAP, vmin=0.0, vmax=heatmap_scale(magnitude),
            shading="flat",
        )
        mesh.set_gid(HEATMAP_GID)
        ax.invert_yaxis()
        ax.set_xticks(np.arange(sparse.n_cols) + 0.5, labels=sparse.col_names, rotation=90, fontsize=6)
        ax.set_xlabel("feature")
        ax.set_ylabel("row")
        ax.set_title(title)
        fig.colorbar(mesh, ax=ax, label="|S|")
        fig.tight_layout()
        return _to_svg(fig)


def score_plot_svg(scores, threshold: float, title: str = "Anomaly scores") -> str:
    s = np.asarray(scores, dtype=np.float64)
    with matplotlib.rc_context(SVG_RC):
        fig = Figure(figsize=FIG_SIZE)
        ax = fig.add_subplot()
        (line,) = ax.plot(np.arange(s.size), s, color="black", linewidth=0.8)
        line.set_gid(SCORE_LINE_GID)
        rule = ax.axhline(threshold, color="red", linestyle="--", linewidth=1.0)
        rule.set_gid(THRESHOLD_GID)
        ax.set_xlabel("row index")
        ax.set_ylabel("residual norm")
        ax.set_title(f"{title} (threshold {threshold:.2f})")
        fig.tight_layout()
        return _to_svg(fig)


def score_plot_frame(row_ids, scores, threshold: float) -> pd.DataFrame:
    s = np.asarray(scores, dtype=np.float64)
    return pd.DataFrame({
        "row_index": np.arange(s.size),
        "row_id": list(row_ids),
        "score": s,
        "threshold": np.full(s.size, float(threshold)),
        "flagged": (s > threshold).astype(np.int8),
    })


def heatmap_frame(sparse: FeatureMatrix) -> pd.DataFrame:
    return sparse.with_values(np.abs(sparse.values)).to_frame()


def write_level_report(
    level_name: str, decomposition: Decomposition, threshold: float, out_dir: str | Path
) -> list[Path]:
    """<level>.heatmap.svg/.csv, <level>.scores.svg, <level>.scoreplot.csv."""
    out = Path(out_dir)
    sparse = decomposition.sparse
    written = [
        atomic_write_text(out / f"{level_name}.heatmap.svg",
                          residual_heatmap_svg(sparse, f"Residual heatmap: {level_name}")),
        write_frame(heatmap_frame(sparse), out / f"{level_name}.heatmap.csv"),
        atomic_write_text(out / f"{level_name}.scores.svg",
                          score_plot_svg(decomposition.scores, threshold, f"Anomaly scores: {level_name}")),
        write_frame(score_plot_frame(sparse.row_ids, decomposition.scores, threshold),
                    out / f"{level_name}.scoreplot.csv"),
    ]
    logger.info("[%s] report written to %s", level_name, out)
    return written
