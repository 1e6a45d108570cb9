"""공통 pytest fixture — 시드 고정 난수, 작은 학습 행렬, 학습된 모델."""

import numpy as np
import pytest

from src.hierarchy import HierarchySpec
from src.hrpca_model import FitConfig, fit
from src.linalg_core import FeatureMatrix
from src.synthgen import GenConfig


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def low_rank_train(rng) -> FeatureMatrix:
    """rank-2 구조 + 작은 노이즈, 200 × 6."""
    g = rng.standard_normal((200, 2))
    w = rng.standard_normal((2, 6))
    values = g @ w + 3.0 + 0.01 * rng.standard_normal((200, 6))
    return FeatureMatrix.from_array(values, col_names=[f"c{j}" for j in range(6)], row_prefix="train")


@pytest.fixture
def rank2_model(low_rank_train):
    return fit(low_rank_train, FitConfig(rank=2), level_name="interaction")


@pytest.fixture
def small_gen() -> GenConfig:
    return GenConfig(n_base_rows=125, n_features=6, seed=7)


@pytest.fixture
def small_spec() -> HierarchySpec:
    return HierarchySpec(levels=("interaction", "session", "profile"), fan_out=(5, 5))
