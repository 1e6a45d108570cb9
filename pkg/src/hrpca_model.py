"""
HrPCA Level Model — 레벨별 저랭크 모델 학습, 분해, 점수, 플래그
================================================================
각 계층 레벨마다 X = L + S 로 분해한다.
    L = ((X − μ)·U)·Uᵀ + μ   (학습된 저랭크 기저로의 사영)
    S = X − L                (희소 잔차: 이상 후보)
행 점수는 S의 행별 ℓ2 노름이고, 점수 > 임계값이면 플래그.

학습은 깨끗한 데이터로만 한다 (semi-supervised). 오염된 데이터에 대한
convex PCP(핵노름 + ℓ1)는 범위 밖.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np
from scipy import stats
from sklearn.model_selection import KFold

from src.canonical import content_digest
from src.errors import InvalidConfig, InvalidInput, SchemaMismatch, DegenerateSpectrum, ParseError
from src.linalg_core import (
    FeatureMatrix,
    center_columns,
    truncated_svd,
    rank_by_explained_variance,
    row_l2_norms,
)

logger = logging.getLogger(__name__)

# ── 모델 기본값 ──────────────────────────────────────────────────
MODEL_VERSION = "1.0.0"
DEFAULT_VARIANCE_CUTOFF = 0.95
DEFAULT_DYNAMIC_K = 3.0          # τ = mean + k·std (학습 잔차 노름)
DEFAULT_FIXED_RANK = 1           # 실험 설정: 모든 레벨 n=1
CALIBRATION_FOLDS = 10           # 보정용 held-out 잔차의 K-fold 수

RankMode = Literal["fixed", "explained_variance"]
ThresholdMode = Literal["fixed", "dynamic"]


# ── 설정 ─────────────────────────────────────────────────────────

@dataclass(frozen=True)
class FitConfig:
    """랭크 선택 방식과 임계값 방식."""
    rank_mode: RankMode = "fixed"
    rank: int = DEFAULT_FIXED_RANK
    variance_cutoff: float = DEFAULT_VARIANCE_CUTOFF
    threshold_mode: ThresholdMode = "dynamic"
    threshold: float = 0.0       # fixed 모드의 τ
    dynamic_k: float = DEFAULT_DYNAMIC_K
    calibrate_k: bool = True     # False면 학습 잔차로 mean + k·std 그대로
    svd_method: str = "lapack"

    def __post_init__(self):
        if self.rank_mode not in ("fixed", "explained_variance"):
            raise InvalidConfig(f"unknown rank_mode: {self.rank_mode}")
        if self.threshold_mode not in ("fixed", "dynamic"):
            raise InvalidConfig(f"unknown threshold_mode: {self.threshold_mode}")
        if self.rank_mode == "fixed" and self.rank < 1:
            raise InvalidConfig(f"fixed rank must be >= 1, got {self.rank}")
        if not 0.0 < self.variance_cutoff <= 1.0:
            raise InvalidConfig(f"variance_cutoff must be in (0, 1], got {self.variance_cutoff}")
        if self.threshold < 0:
            raise InvalidConfig(f"fixed threshold must be >= 0, got {self.threshold}")
        if self.dynamic_k <= 0:
            raise InvalidConfig(f"dynamic_k must be > 0, got {self.dynamic_k}")
        if not isinstance(self.calibrate_k, bool):
            raise InvalidConfig(f"calibrate_k must be true or false, got {self.calibrate_k!r}")
        if self.svd_method not in ("lapack", "power"):
            raise InvalidConfig(f"unknown svd_method: {self.svd_method}")


# ── 모델 ─────────────────────────────────────────────────────────

@dataclass(frozen=True)
class LevelModel:
    """학습된 레벨 모델. fit 이후 불변."""
    level_name: str
    feature_names: tuple[str, ...]
    col_means: np.ndarray
    basis_u: np.ndarray          # (d, r) 정규직교
    singular_values: np.ndarray
    rank: int
    threshold: float
    train_residual_mean: float
    train_residual_std: float
    version: str = MODEL_VERSION
    content_hash: str = ""

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def to_payload(self, include_hash: bool = True) -> dict:
        """번들 스키마의 models[] 항목. basis_u는 행 우선 중첩 리스트."""
        payload = {
            "level_name": self.level_name,
            "feature_names": list(self.feature_names),
            "col_means": self.col_means.tolist(),
            "basis_u": self.basis_u.tolist(),
            "singular_values": self.singular_values.tolist(),
            "rank": int(self.rank),
            "threshold": float(self.threshold),
            "train_residual_mean": float(self.train_residual_mean),
            "train_residual_std": float(self.train_residual_std),
            "version": self.version,
        }
        if include_hash:
            payload["content_hash"] = self.content_hash
        return payload

    def compute_hash(self) -> str:
        return content_digest(self.to_payload(include_hash=False))

    def sealed(self) -> LevelModel:
        """content_hash를 채운 사본."""
        return replace(self, content_hash=self.compute_hash())

    @classmethod
    def from_payload(cls, payload: dict, location: str = "") -> LevelModel:
        try:
            names = tuple(str(n) for n in payload["feature_names"])
            rank = int(payload["rank"])
            basis = np.asarray(payload["basis_u"], dtype=np.float64).reshape(len(names), rank)
            model = cls(
                level_name=str(payload["level_name"]),
                feature_names=names,
                col_means=np.asarray(payload["col_means"], dtype=np.float64),
                basis_u=basis,
                singular_values=np.asarray(payload["singular_values"], dtype=np.float64),
                rank=rank,
                threshold=float(payload["threshold"]),
                train_residual_mean=float(payload["train_residual_mean"]),
                train_residual_std=float(payload["train_residual_std"]),
                version=str(payload["version"]),
                content_hash=str(payload["content_hash"]),
            )
        except KeyError as e:
            raise ParseError(f"missing model field {e}", location) from e
        except (TypeError, ValueError) as e:
            raise ParseError(f"malformed model field: {e}", location) from e
        if model.col_means.shape != (len(names),) or model.singular_values.shape != (rank,):
            raise ParseError("model array shapes do not match feature_names/rank", location)
        return model


@dataclass(frozen=True)
class Decomposition:
    """X = L + S 와 행 점수."""
    low_rank: FeatureMatrix
    sparse: FeatureMatrix
    scores: np.ndarray


# ── 학습 ─────────────────────────────────────────────────────────

def _residual_norms(centered: np.ndarray, basis: np.ndarray) -> np.ndarray:
    residual = centered - (centered @ basis) @ basis.T
    return row_l2_norms(residual)


def calibrated_k(k: float, n_rows: int) -> float:
    """행 n개 전체의 오탐 확률이 행 하나의 정규 꼬리 P(Z > k)를 넘지 않도록 키운 배수.

    행마다 허용 꼬리는 P(Z > k) / n. 평균과 표준편차도 n개로 추정하므로
    정규 분위수 대신 자유도 n−1 인 t 분포의 예측 구간을 쓴다.
    (모집단 std 기준이라 √(n/(n−1)), 새 행이라 √(1 + 1/n) 을 곱한다.)
    결과는 k 이상이다.
    """
    if n_rows < 2:
        raise InvalidInput(f"calibration needs at least 2 rows, got {n_rows}")
    per_row_tail = stats.norm.sf(k) / n_rows
    if per_row_tail <= 0.0:
        return float(k)
    quantile = stats.t.isf(per_row_tail, df=n_rows - 1)
    scale = math.sqrt((1.0 + 1.0 / n_rows) * n_rows / (n_rows - 1))
    return max(float(k), float(quantile * scale))


def held_out_residual_norms(
    values: np.ndarray, rank: int, svd_method: str = "lapack"
) -> np.ndarray | None:
    """K-fold로 각 행을 자신이 빠진 fold 모델로 채점한 잔차 노름.

    학습 잔차는 기저가 그 행들에 맞춰져 있어 새 데이터보다 작게 나온다
    (행 수가 적은 상위 레벨일수록 심하다). fold 학습 행이 2개 미만이면 None.
    """
    n, d = values.shape
    n_splits = min(n, CALIBRATION_FOLDS)
    if n - math.ceil(n / n_splits) < 2:
        return None
    norms = np.empty(n)
    for train_idx, held_idx in KFold(n_splits=n_splits).split(values):
        part = values[train_idx]
        mu = part.mean(axis=0)
        basis = np.zeros((d, 0))
        if np.any(np.ptp(part, axis=0) > 0):
            svd = truncated_svd(part - mu, max_rank=min(rank, *part.shape), method=svd_method)
            basis = svd.basis_u
        norms[held_idx] = _residual_norms(values[held_idx] - mu, basis)
    return norms


def _calibrated_threshold(
    values: np.ndarray, rank: int, cfg: FitConfig, train_norms: np.ndarray, level_name: str
) -> float:
    n = values.shape[0]
    held = held_out_residual_norms(values, rank, cfg.svd_method)
    if held is None:
        held = train_norms
    k_n = calibrated_k(cfg.dynamic_k, n)
    logger.debug("[%s] dynamic k %.3g calibrated to %.3g for %d rows", level_name, cfg.dynamic_k, k_n, n)
    return float(held.mean() + k_n * held.std())


def fit(x_train: FeatureMatrix, cfg: FitConfig, level_name: str = "level") -> LevelModel:
    """깨끗한 학습 데이터로 레벨 모델을 학습한다."""
    n, d = x_train.n_rows, x_train.n_cols
    if n < 2:
        raise InvalidInput(f"fit needs at least 2 rows, got {n}")
    limit = min(n, d)
    if cfg.rank_mode == "fixed":
        if cfg.rank > limit:
            raise InvalidConfig(f"rank {cfg.rank} exceeds min(n_rows, d) = {limit}")
        if n <= cfg.rank:
            raise InvalidConfig(f"n_rows ({n}) must exceed fixed rank ({cfg.rank})")

    # 중심화 후의 값은 평균의 반올림 오차를 남기므로 원본 열 범위로 판정
    if not np.any(np.ptp(x_train.values, axis=0) > 0):
        raise DegenerateSpectrum(f"[{level_name}] all training rows are identical")
    centered, means = center_columns(x_train)

    max_rank = cfg.rank if cfg.rank_mode == "fixed" else limit
    svd = truncated_svd(centered, max_rank=max_rank, method=cfg.svd_method)
    if svd.rank == 0:
        raise DegenerateSpectrum(f"[{level_name}] training spectrum is numerically zero")

    if cfg.rank_mode == "explained_variance":
        r = rank_by_explained_variance(svd.singular_values, cfg.variance_cutoff)
    else:
        r = svd.rank
        if r < cfg.rank:
            logger.warning(
                "[%s] requested rank %d reduced to numerical rank %d", level_name, cfg.rank, r
            )
    basis = np.ascontiguousarray(svd.basis_u[:, :r])
    sigmas = np.ascontiguousarray(svd.singular_values[:r])

    norms = _residual_norms(centered.values, basis)
    res_mean = float(norms.mean())
    res_std = float(norms.std())
    if cfg.threshold_mode == "fixed":
        threshold = float(cfg.threshold)
    else:
        threshold = res_mean + cfg.dynamic_k * res_std
        if cfg.calibrate_k:
            threshold = max(threshold, _calibrated_threshold(x_train.values, r, cfg, norms, level_name))

    for arr in (means, basis, sigmas):
        arr.setflags(write=False)
    model = LevelModel(
        level_name=level_name,
        feature_names=x_train.col_names,
        col_means=means,
        basis_u=basis,
        singular_values=sigmas,
        rank=r,
        threshold=threshold,
        train_residual_mean=res_mean,
        train_residual_std=res_std,
    ).sealed()
    logger.info(
        "[%s] fitted rank=%d threshold=%.6g on %d rows", level_name, r, threshold, n
    )
    return model


# ── 추론 ─────────────────────────────────────────────────────────

def check_schema(model: LevelModel, x: FeatureMatrix) -> None:
    """열 개수와 이름이 모델과 같아야 한다."""
    if x.n_cols != model.n_features:
        raise SchemaMismatch(
            f"[{model.level_name}] expected {model.n_features} columns, got {x.n_cols}"
        )
    if x.col_names != model.feature_names:
        diff = [a for a, b in zip(x.col_names, model.feature_names) if a != b]
        raise SchemaMismatch(
            f"[{model.level_name}] column names differ from model: {', '.join(diff[:5])}"
        )


def decompose(model: LevelModel, x: FeatureMatrix) -> Decomposition:
    """X = L + S."""
    check_schema(model, x)
    centered = x.values - model.col_means
    low = (centered @ model.basis_u) @ model.basis_u.T + model.col_means
    sparse = x.values - low
    return Decomposition(
        low_rank=x.with_values(low),
        sparse=x.with_values(sparse),
        scores=row_l2_norms(sparse),
    )


def score(model: LevelModel, x: FeatureMatrix) -> np.ndarray:
    """행별 잔차 노름."""
    return decompose(model, x).scores


def flag(scores, threshold: float) -> np.ndarray:
    """score > threshold (엄격 부등호)."""
    if threshold < 0:
        raise InvalidConfig(f"threshold must be >= 0, got {threshold}")
    return np.asarray(scores, dtype=np.float64) > threshold
