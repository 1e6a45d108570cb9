"""hrpca_model — fit / decompose / score / flag."""

import numpy as np
import pytest

from src.errors import DegenerateSpectrum, InvalidConfig, InvalidInput, SchemaMismatch
from src.hrpca_model import (
    FitConfig,
    LevelModel,
    calibrated_k,
    decompose,
    fit,
    flag,
    held_out_residual_norms,
    score,
)
from src.linalg_core import FeatureMatrix, orthonormality_error


def _orthogonal_unit(model: LevelModel, rng) -> np.ndarray:
    v = rng.standard_normal(model.n_features)
    v -= model.basis_u @ (model.basis_u.T @ v)
    return v / np.linalg.norm(v)


# ── fit ──────────────────────────────────────────────────────────

def test_fit_exact_rank1_has_zero_residual(rng):
    values = np.outer(rng.standard_normal(50), rng.standard_normal(8))
    model = fit(FeatureMatrix.from_array(values), FitConfig(rank=1))
    assert model.rank == 1
    assert model.train_residual_mean < 1e-8
    assert model.threshold == pytest.approx(0.0, abs=1e-7)


def test_fit_model_invariants(rank2_model):
    assert orthonormality_error(rank2_model.basis_u) < 1e-8
    assert rank2_model.threshold >= 0 and rank2_model.train_residual_std >= 0
    assert rank2_model.basis_u.shape == (6, 2)
    assert rank2_model.content_hash == rank2_model.compute_hash()


def test_fit_dynamic_threshold_formula(low_rank_train):
    model = fit(low_rank_train, FitConfig(rank=2, dynamic_k=2.5, calibrate_k=False))
    assert model.threshold == pytest.approx(model.train_residual_mean + 2.5 * model.train_residual_std)


def test_calibrated_threshold_never_below_formula(low_rank_train):
    plain = fit(low_rank_train, FitConfig(rank=2, calibrate_k=False))
    calibrated = fit(low_rank_train, FitConfig(rank=2))
    assert calibrated.train_residual_mean == plain.train_residual_mean
    assert calibrated.threshold >= plain.threshold
    assert calibrated.threshold > plain.train_residual_mean + 4.0 * plain.train_residual_std


def test_calibrated_threshold_small_level_clears_fresh_rows(rng):
    w = rng.standard_normal(10)

    def draw(n):
        return np.outer(rng.standard_normal(n), w) + 0.01 * rng.standard_normal((n, 10))

    model = fit(FeatureMatrix.from_array(draw(5)), FitConfig(rank=1))
    fresh = FeatureMatrix.from_array(draw(20), col_names=model.feature_names)
    assert not flag(score(model, fresh), model.threshold).any()


def test_calibrated_k_grows_with_rows():
    assert calibrated_k(3.0, 100) > 3.0
    assert calibrated_k(3.0, 10_000) > calibrated_k(3.0, 100)
    # 행이 아주 적으면 평균/표준편차 추정 불확실성이 지배
    assert calibrated_k(3.0, 5) > calibrated_k(3.0, 100)
    assert calibrated_k(40.0, 100) == 40.0
    with pytest.raises(InvalidInput):
        calibrated_k(3.0, 1)


def test_held_out_residual_norms(rng):
    values = np.outer(rng.standard_normal(30), rng.standard_normal(4))
    norms = held_out_residual_norms(values, rank=1)
    assert norms.shape == (30,)
    assert norms.max() < 1e-9
    assert held_out_residual_norms(values[:2], rank=1) is None


def test_held_out_norms_exceed_training_norms_on_few_rows(rng):
    values = np.outer(rng.standard_normal(6), rng.standard_normal(10)) + 0.01 * rng.standard_normal((6, 10))
    model = fit(FeatureMatrix.from_array(values), FitConfig(rank=1))
    assert held_out_residual_norms(values, rank=1).mean() > model.train_residual_mean


def test_fit_fixed_threshold(low_rank_train):
    model = fit(low_rank_train, FitConfig(rank=2, threshold_mode="fixed", threshold=5.24))
    assert model.threshold == 5.24


def test_fit_explained_variance_picks_dominant_mode(rng):
    q, _ = np.linalg.qr(rng.standard_normal((40, 2)))
    basis, _ = np.linalg.qr(rng.standard_normal((5, 2)))
    values = q @ np.diag([10.0, 0.1]) @ basis.T
    model = fit(FeatureMatrix.from_array(values), FitConfig(rank_mode="explained_variance", variance_cutoff=0.95))
    assert model.rank == 1


def test_fit_rank_too_large(low_rank_train):
    with pytest.raises(InvalidConfig):
        fit(low_rank_train, FitConfig(rank=7))


@pytest.mark.parametrize("row", [[1.0, 1.0, 1.0], [0.1, 0.1, 0.1], [0.1, 0.7, 1 / 3]])
def test_fit_identical_rows(row):
    with pytest.raises(DegenerateSpectrum):
        fit(FeatureMatrix.from_array(np.tile(row, (10, 1))), FitConfig(rank=1))
    with pytest.raises(DegenerateSpectrum):
        fit(FeatureMatrix.from_array(np.tile(row, (3, 1))), FitConfig(rank=1))


def test_fit_needs_two_rows():
    with pytest.raises(InvalidInput):
        fit(FeatureMatrix.from_array([[1.0, 2.0]]), FitConfig(rank=1))


def test_fit_reduces_rank_to_numerical_rank(rng, caplog):
    values = np.outer(rng.standard_normal(30), rng.standard_normal(4))
    model = fit(FeatureMatrix.from_array(values), FitConfig(rank=3))
    assert model.rank == 1
    assert "reduced to numerical rank" in caplog.text


def test_fit_config_validation():
    with pytest.raises(InvalidConfig):
        FitConfig(rank_mode="auto")
    with pytest.raises(InvalidConfig):
        FitConfig(threshold_mode="fixed", threshold=-1.0)
    with pytest.raises(InvalidConfig):
        FitConfig(calibrate_k="yes")


# ── decompose / score ────────────────────────────────────────────

def test_decompose_identity(rank2_model, low_rank_train):
    dec = decompose(rank2_model, low_rank_train)
    np.testing.assert_allclose(dec.low_rank.values + dec.sparse.values, low_rank_train.values, rtol=1e-9)
    np.testing.assert_allclose(dec.scores, np.linalg.norm(dec.sparse.values, axis=1), rtol=1e-9)


def test_decompose_low_rank_is_idempotent(rank2_model, low_rank_train):
    low = decompose(rank2_model, low_rank_train).low_rank
    assert np.abs(decompose(rank2_model, low).sparse.values).max() < 1e-7


def test_mean_and_basis_rows_have_zero_score(rank2_model):
    mu = rank2_model.col_means
    rows = np.vstack([mu, mu, mu + 7.0 * rank2_model.basis_u[:, 0]])
    x = FeatureMatrix.from_array(rows, col_names=rank2_model.feature_names)
    assert score(rank2_model, x).max() < 1e-9


@pytest.mark.parametrize("norm", [5.0, 9.0])
def test_orthogonal_offset_score(rank2_model, rng, norm):
    row = rank2_model.col_means + norm * _orthogonal_unit(rank2_model, rng)
    x = FeatureMatrix.from_array(row, col_names=rank2_model.feature_names)
    assert score(rank2_model, x)[0] == pytest.approx(norm, abs=1e-9)


def test_training_scores_bounded(rank2_model, low_rank_train):
    s = score(rank2_model, low_rank_train)
    assert s.mean() == pytest.approx(rank2_model.train_residual_mean, rel=1e-9)


def test_scores_follow_row_permutation(rank2_model, low_rank_train, rng):
    perm = rng.permutation(low_rank_train.n_rows)
    shuffled = FeatureMatrix.from_array(low_rank_train.values[perm], col_names=low_rank_train.col_names)
    np.testing.assert_allclose(score(rank2_model, shuffled), score(rank2_model, low_rank_train)[perm], rtol=1e-12)


def test_full_rank_model_reconstructs_everything(low_rank_train, rng):
    model = fit(low_rank_train, FitConfig(rank=6))
    assert model.rank == 6
    x = FeatureMatrix.from_array(rng.standard_normal((50, 6)) * 10.0, col_names=low_rank_train.col_names)
    assert score(model, x).max() < 1e-7


def test_empty_matrix_scores(rank2_model):
    x = FeatureMatrix(np.zeros((0, 6)), rank2_model.feature_names, ())
    assert score(rank2_model, x).size == 0


def test_schema_mismatch(rank2_model):
    with pytest.raises(SchemaMismatch):
        score(rank2_model, FeatureMatrix.from_array(np.zeros((2, 5))))
    renamed = FeatureMatrix.from_array(np.zeros((2, 6)), col_names=[f"x{j}" for j in range(6)])
    with pytest.raises(SchemaMismatch):
        score(rank2_model, renamed)


# ── flag ─────────────────────────────────────────────────────────

def test_flag_strict():
    assert flag([5.3, 1.0], 5.24).tolist() == [True, False]
    assert flag([0.0, 0.0], 0.0).tolist() == [False, False]
    scores = np.array([1.0, 3.0, 2.0])
    assert not flag(scores, scores.max()).any()


def test_flag_count_shrinks_as_threshold_rises(rank2_model, low_rank_train):
    scores = score(rank2_model, low_rank_train)
    counts = [int(flag(scores, t).sum()) for t in np.linspace(0.0, scores.max() * 1.1, 25)]
    assert counts == sorted(counts, reverse=True)
    assert counts[-1] == 0


def test_flag_negative_threshold():
    with pytest.raises(InvalidConfig):
        flag([1.0], -0.1)


# ── payload ──────────────────────────────────────────────────────

def test_payload_round_trip(rank2_model):
    restored = LevelModel.from_payload(rank2_model.to_payload())
    assert restored.content_hash == rank2_model.content_hash
    assert restored.compute_hash() == rank2_model.content_hash
    np.testing.assert_array_equal(restored.basis_u, rank2_model.basis_u)
