"""linalg_core — 중심화, 절단 SVD, 설명 분산 랭크, 행 노름."""

import numpy as np
import pytest

from src.errors import DegenerateSpectrum, InvalidInput, NumericalFailure
from src.linalg_core import (
    FeatureMatrix,
    center_columns,
    orthonormality_error,
    rank_by_explained_variance,
    row_l2_norms,
    truncated_svd,
)


# ── FeatureMatrix ────────────────────────────────────────────────

def test_feature_matrix_rejects_non_finite():
    with pytest.raises(InvalidInput):
        FeatureMatrix.from_array([[1.0, np.nan]])


def test_feature_matrix_rejects_duplicate_names():
    with pytest.raises(InvalidInput):
        FeatureMatrix(np.zeros((1, 2)), ("a", "a"), ("r0",))


def test_feature_matrix_values_are_read_only():
    x = FeatureMatrix.from_array([[1.0, 2.0]])
    with pytest.raises(ValueError):
        x.values[0, 0] = 5.0


# ── center_columns ───────────────────────────────────────────────

def test_center_columns_small():
    centered, means = center_columns(FeatureMatrix.from_array([[1, 2], [3, 4]]))
    np.testing.assert_allclose(centered.values, [[-1, -1], [1, 1]])
    np.testing.assert_allclose(means, [2, 3])


def test_center_columns_single_row_and_zero():
    centered, means = center_columns(FeatureMatrix.from_array([[5, 7]]))
    np.testing.assert_allclose(centered.values, [[0, 0]])
    np.testing.assert_allclose(means, [5, 7])
    zero, zmeans = center_columns(FeatureMatrix.from_array(np.zeros((3, 2))))
    assert not zero.values.any() and not zmeans.any()


def test_center_columns_empty():
    with pytest.raises(InvalidInput):
        center_columns(FeatureMatrix(np.zeros((0, 2)), ("a", "b"), ()))


# ── truncated_svd ────────────────────────────────────────────────

@pytest.mark.parametrize("method", ["lapack", "power"])
def test_svd_diagonal(method):
    res = truncated_svd(np.array([[3.0, 0.0], [0.0, 0.0]]), max_rank=1, method=method)
    assert res.rank == 1
    np.testing.assert_allclose(res.singular_values, [3.0])
    np.testing.assert_allclose(res.basis_u[:, 0], [1.0, 0.0], atol=1e-12)


@pytest.mark.parametrize("method", ["lapack", "power"])
def test_svd_identity(method):
    res = truncated_svd(np.eye(2), max_rank=2, method=method)
    np.testing.assert_allclose(res.singular_values, [1.0, 1.0])
    assert orthonormality_error(res.basis_u) < 1e-8


def _with_spectrum(rng, n, d, sigmas):
    """지정된 특이값을 갖는 n × d 행렬."""
    q_left, _ = np.linalg.qr(rng.standard_normal((n, len(sigmas))))
    q_right, _ = np.linalg.qr(rng.standard_normal((d, len(sigmas))))
    return q_left @ np.diag(sigmas) @ q_right.T


@pytest.mark.parametrize("method", ["lapack", "power"])
def test_svd_rank2_product_matches_gram_oracle(rng, method):
    x = _with_spectrum(rng, 6, 4, [4.0, 1.5])
    res = truncated_svd(x, max_rank=4, method=method)
    assert res.rank == 2
    eig = np.sort(np.linalg.eigvalsh(x.T @ x))[::-1]
    np.testing.assert_allclose(res.singular_values, np.sqrt(eig[:2]), rtol=1e-8)
    assert orthonormality_error(res.basis_u) < 1e-8


def test_full_rank_basis_reconstructs_centered_data(rng):
    for n, d in [(40, 7), (12, 12), (9, 3)]:
        centered, _ = center_columns(FeatureMatrix.from_array(rng.standard_normal((n, d)) * 4.0))
        x = centered.values
        res = truncated_svd(x, max_rank=min(n, d))
        u = res.basis_u
        assert np.linalg.norm(x - (x @ u) @ u.T) < 1e-7


def test_svd_sign_convention(rng):
    res = truncated_svd(rng.standard_normal((20, 5)), max_rank=5)
    for j in range(res.rank):
        col = res.basis_u[:, j]
        assert col[np.argmax(np.abs(col))] > 0


def test_svd_non_finite():
    with pytest.raises(InvalidInput):
        truncated_svd(np.array([[1.0, np.inf]]), max_rank=1)


def test_svd_power_non_convergence_reports_iterations(rng):
    x = rng.standard_normal((10, 4))
    with pytest.raises(NumericalFailure) as info:
        truncated_svd(x, max_rank=2, method="power", tol=1e-300, max_iters=3)
    assert info.value.iterations == 3


def test_svd_deterministic(rng):
    x = _with_spectrum(rng, 15, 5, [6.0, 3.0, 1.0])
    a = truncated_svd(x, max_rank=3, method="power")
    b = truncated_svd(x, max_rank=3, method="power")
    assert np.array_equal(a.basis_u, b.basis_u)
    assert np.array_equal(a.singular_values, b.singular_values)


# ── rank_by_explained_variance ───────────────────────────────────

@pytest.mark.parametrize("spectrum,cutoff,expected", [
    ([10, 0, 0], 0.95, 1),
    ([4, 3], 0.60, 1),
    ([4, 3], 1.0, 2),
])
def test_rank_by_explained_variance(spectrum, cutoff, expected):
    assert rank_by_explained_variance(spectrum, cutoff) == expected


def test_rank_by_explained_variance_zero_spectrum():
    with pytest.raises(DegenerateSpectrum):
        rank_by_explained_variance([0.0, 0.0], 0.9)


# ── row_l2_norms ─────────────────────────────────────────────────

def test_row_l2_norms():
    np.testing.assert_allclose(row_l2_norms(np.array([[3.0, 4.0]])), [5.0])
    np.testing.assert_allclose(row_l2_norms(np.zeros((2, 3))), [0.0, 0.0])
    np.testing.assert_allclose(row_l2_norms(np.ones((1, 4))), [2.0])
    assert row_l2_norms(np.zeros((0, 3))).size == 0
