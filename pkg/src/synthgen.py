"""
HrPCA Synthetic Generator — 무작위 사영 기반 저랭크 데이터 + 이상 주입
======================================================================
깨끗한 데이터: X = G·W + E
    G (n×r), W (r×d) 표준정규, E ~ N(0, noise_floor_std²)
이상 주입: 선택된 행의 일부 feature에 가산 가우시안 노이즈
    (열별 std = anomaly_magnitude × 깨끗한 열 std)

시드 규약 (config reference에 문서화):
    W (사영 행렬)   : seed 의 stream 0, train/test가 같은 부분공간을 공유
    train 표본      : seed + 0 의 stream 1
    test 표본       : seed + 1 의 stream 1
    이상 주입       : seed + 2 의 stream 1
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from src.errors import InvalidConfig
from src.hierarchy import HierarchySpec, LevelDataset, build_level_chain, level_row_ids
from src.linalg_core import FeatureMatrix

logger = logging.getLogger(__name__)

# ── 기본값 (625 → 125 → 25 → 5 네 레벨을 채우는 최소 크기) ──────
DEFAULT_N_BASE_ROWS = 625
DEFAULT_N_FEATURES = 10
DEFAULT_TRUE_RANK = 1
DEFAULT_NOISE_FLOOR_STD = 0.01
DEFAULT_ANOMALY_FRACTION = 0.1
DEFAULT_ANOMALY_MAGNITUDE = 5.0
DEFAULT_AFFECTED_FEATURE_FRACTION = 1.0
DEFAULT_SEED = 42

# ── 난수 스트림 ──────────────────────────────────────────────────
PROJECTION_STREAM = 0
SAMPLE_STREAM = 1
TRAIN_SEED_OFFSET = 0
TEST_SEED_OFFSET = 1
INJECTION_SEED_OFFSET = 2


@dataclass(frozen=True)
class GenConfig:
    n_base_rows: int = DEFAULT_N_BASE_ROWS
    n_features: int = DEFAULT_N_FEATURES
    true_rank: int = DEFAULT_TRUE_RANK
    noise_floor_std: float = DEFAULT_NOISE_FLOOR_STD
    anomaly_fraction: float = DEFAULT_ANOMALY_FRACTION
    anomaly_magnitude: float = DEFAULT_ANOMALY_MAGNITUDE
    affected_feature_fraction: float = DEFAULT_AFFECTED_FEATURE_FRACTION
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.n_base_rows < 1 or self.n_features < 1:
            raise InvalidConfig("n_base_rows and n_features must be >= 1")
        if not 1 <= self.true_rank <= min(self.n_base_rows, self.n_features):
            raise InvalidConfig(
                f"true_rank must be in [1, {min(self.n_base_rows, self.n_features)}], got {self.true_rank}"
            )
        if self.noise_floor_std < 0:
            raise InvalidConfig("noise_floor_std must be >= 0")
        if not 0.0 <= self.anomaly_fraction < 1.0:
            raise InvalidConfig(f"anomaly_fraction must be in [0, 1), got {self.anomaly_fraction}")
        if self.anomaly_magnitude <= 0:
            raise InvalidConfig("anomaly_magnitude must be > 0")
        if not 0.0 < self.affected_feature_fraction <= 1.0:
            raise InvalidConfig(
                f"affected_feature_fraction must be in (0, 1], got {self.affected_feature_fraction}"
            )
        if self.seed < 0:
            raise InvalidConfig("seed must be a non-negative integer")

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(f"feature_{j:02d}" for j in range(self.n_features))


@dataclass
class SyntheticExperiment:
    train_chain: list[LevelDataset]
    test_chain: list[LevelDataset]
    injected_mask: np.ndarray    # 최하위 레벨 (n × d), 노이즈가 들어간 칸


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream,)))


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


# ── 생성 ─────────────────────────────────────────────────────────

def generate_clean(
    cfg: GenConfig, draw_seed: int | None = None, level_name: str = "interaction"
) -> FeatureMatrix:
    """X = G·W + E. W는 cfg.seed로, G/E는 draw_seed(기본 cfg.seed)로 뽑는다."""
    n, d, r = cfg.n_base_rows, cfg.n_features, cfg.true_rank
    projection = _rng(cfg.seed, PROJECTION_STREAM).standard_normal((r, d))
    rng = _rng(cfg.seed if draw_seed is None else draw_seed, SAMPLE_STREAM)
    factors = rng.standard_normal((n, r))
    noise = rng.standard_normal((n, d)) * cfg.noise_floor_std
    return FeatureMatrix(factors @ projection + noise, cfg.feature_names, level_row_ids(level_name, n))


def inject_anomalies_with_mask(
    x: FeatureMatrix, cfg: GenConfig
) -> tuple[FeatureMatrix, np.ndarray, np.ndarray]:
    """(corrupted, labels, mask). mask[i, j]는 노이즈가 더해진 칸."""
    n, d = x.n_rows, x.n_cols
    n_anomalies = _round_half_up(cfg.anomaly_fraction * n)
    if n > 0 and n_anomalies >= n:
        raise InvalidConfig(
            f"anomaly_fraction {cfg.anomaly_fraction} would corrupt all {n} rows"
        )
    values = np.array(x.values, copy=True)
    labels = np.zeros(n, dtype=bool)
    mask = np.zeros((n, d), dtype=bool)
    if n_anomalies == 0:
        return x.with_values(values), labels, mask

    rng = _rng(cfg.seed, SAMPLE_STREAM)
    rows = np.sort(rng.choice(n, size=n_anomalies, replace=False))
    n_affected = min(d, max(1, _round_half_up(cfg.affected_feature_fraction * d)))
    col_std = x.values.std(axis=0)
    for row in rows:
        feats = np.sort(rng.choice(d, size=n_affected, replace=False))
        values[row, feats] += rng.standard_normal(n_affected) * cfg.anomaly_magnitude * col_std[feats]
        mask[row, feats] = True
    labels[rows] = True
    return x.with_values(values), labels, mask


def inject_anomalies(x: FeatureMatrix, cfg: GenConfig) -> tuple[FeatureMatrix, np.ndarray]:
    corrupted, labels, _ = inject_anomalies_with_mask(x, cfg)
    return corrupted, labels


def generate_experiment_detailed(cfg: GenConfig, spec: HierarchySpec) -> SyntheticExperiment:
    """학습 체인(깨끗한 별도 표본)과 테스트 체인(최하위 레벨 주입 후 롤업)."""
    sizes = spec.level_sizes(cfg.n_base_rows)
    if min(sizes) < 2:
        logger.warning("coarsest level has %d row(s); fitting it will fail", min(sizes))
    base = spec.levels[0]
    train = generate_clean(cfg, draw_seed=cfg.seed + TRAIN_SEED_OFFSET, level_name=base)
    test_clean = generate_clean(cfg, draw_seed=cfg.seed + TEST_SEED_OFFSET, level_name=base)
    corrupted, labels, mask = inject_anomalies_with_mask(
        test_clean, replace(cfg, seed=cfg.seed + INJECTION_SEED_OFFSET)
    )
    train_chain = build_level_chain(
        LevelDataset(base, train, labels=np.zeros(train.n_rows, dtype=bool)), spec
    )
    test_chain = build_level_chain(LevelDataset(base, corrupted, labels=labels), spec)
    return SyntheticExperiment(train_chain=train_chain, test_chain=test_chain, injected_mask=mask)


def generate_experiment(
    cfg: GenConfig, spec: HierarchySpec
) -> tuple[list[LevelDataset], list[LevelDataset]]:
    exp = generate_experiment_detailed(cfg, spec)
    return exp.train_chain, exp.test_chain
