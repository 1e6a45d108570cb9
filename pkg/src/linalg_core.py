"""
HrPCA Linear Algebra Core — 절단 SVD, 랭크 선택, 중심화, 행 노름
================================================================
다른 모든 모듈의 수치 기반. 순수 함수만 있고 공유 가변 상태가 없다.

FeatureMatrix는 행=엔티티(interaction/session/profile/account), 열=이름 있는 수치 feature.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
import pandas as pd

from src.errors import InvalidInput, NumericalFailure, DegenerateSpectrum

# ── SVD 계약 상수 ────────────────────────────────────────────────
DEFAULT_SVD_TOL = 1e-10          # power 방식: 연속 벡터 변화량 허용치
DEFAULT_SVD_MAX_ITERS = 1000     # power 방식: 모드당 최대 반복
RANK_CUTOFF_RATIO = 1e-10        # σ_j < ratio·σ_1 이면 0으로 간주
POWER_SEED = 20240917            # power 방식 시작 벡터 고정 시드
GRAM_DEFLATION_FLOOR = 1e-12     # power 방식: 남은 에너지(trace)가 전체의 이 비율 이하이면 종료
ORTHONORMAL_TOL = 1e-8

SvdMethod = Literal["lapack", "power"]


# ── 데이터클래스 ─────────────────────────────────────────────────

@dataclass(frozen=True)
class FeatureMatrix:
    """행=엔티티, 열=feature. values는 읽기 전용 (n_rows, n_cols) float64."""
    values: np.ndarray
    col_names: tuple[str, ...]
    row_ids: tuple[str, ...]

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, copy=True)
        if arr.ndim != 2:
            raise InvalidInput(f"values must be 2-D, got {arr.ndim}-D")
        cols = tuple(str(c) for c in self.col_names)
        rows = tuple(str(r) for r in self.row_ids)
        if len(cols) != arr.shape[1]:
            raise InvalidInput(f"col_names has {len(cols)} entries for {arr.shape[1]} columns")
        if len(rows) != arr.shape[0]:
            raise InvalidInput(f"row_ids has {len(rows)} entries for {arr.shape[0]} rows")
        if len(set(cols)) != len(cols):
            raise InvalidInput("duplicate column names")
        if len(set(rows)) != len(rows):
            raise InvalidInput("duplicate row ids")
        if not np.all(np.isfinite(arr)):
            raise InvalidInput("matrix contains NaN or Inf")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "col_names", cols)
        object.__setattr__(self, "row_ids", rows)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_array(
        cls,
        values,
        col_names: Sequence[str] | None = None,
        row_ids: Sequence[str] | None = None,
        row_prefix: str = "row",
    ) -> FeatureMatrix:
        """이름이 없으면 f0.., <prefix>-000000.. 으로 채운다."""
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(1, -1)
        n, d = arr.shape
        if col_names is None:
            col_names = [f"f{j}" for j in range(d)]
        if row_ids is None:
            row_ids = [f"{row_prefix}-{i:06d}" for i in range(n)]
        return cls(arr, tuple(col_names), tuple(row_ids))

    def with_values(self, values) -> FeatureMatrix:
        """같은 이름으로 값만 교체."""
        return FeatureMatrix(np.asarray(values, dtype=np.float64), self.col_names, self.row_ids)

    def take(self, rows: Sequence[int]) -> FeatureMatrix:
        idx = np.asarray(rows, dtype=np.intp)
        return FeatureMatrix(
            self.values[idx],
            self.col_names,
            tuple(self.row_ids[i] for i in idx),
        )

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.values, columns=list(self.col_names))
        df.insert(0, "row_id", list(self.row_ids))
        return df


@dataclass(frozen=True)
class SvdResult:
    """basis_u: (n_cols, r) 주성분 방향 (중심화된 데이터의 우특이벡터)."""
    basis_u: np.ndarray
    singular_values: np.ndarray
    rank: int
    iterations: list[int] = field(default_factory=list)


# ── 내부 유틸 ────────────────────────────────────────────────────

def _as_array(x: FeatureMatrix | np.ndarray) -> np.ndarray:
    return x.values if isinstance(x, FeatureMatrix) else np.asarray(x, dtype=np.float64)


def _fix_signs(basis: np.ndarray) -> np.ndarray:
    """각 열의 최대 |원소|가 양수가 되도록 (동률이면 낮은 인덱스)."""
    if basis.size == 0:
        return basis
    pivots = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[pivots, np.arange(basis.shape[1])])
    signs[signs == 0] = 1.0
    return basis * signs


def numerical_rank(singular_values: np.ndarray) -> int:
    """σ_j ≥ RANK_CUTOFF_RATIO·σ_1 인 값의 개수."""
    s = np.asarray(singular_values, dtype=np.float64)
    if s.size == 0 or s[0] <= 0.0:
        return 0
    return int(np.count_nonzero(s >= RANK_CUTOFF_RATIO * s[0]))


def orthonormality_error(basis: np.ndarray) -> float:
    """‖UᵀU − I‖_max."""
    r = basis.shape[1]
    if r == 0:
        return 0.0
    return float(np.max(np.abs(basis.T @ basis - np.eye(r))))


# ── 공개 연산 ────────────────────────────────────────────────────

def center_columns(x: FeatureMatrix) -> tuple[FeatureMatrix, np.ndarray]:
    """열 평균을 빼서 중심화. (centered, means) 반환."""
    if x.n_rows == 0:
        raise InvalidInput("cannot center an empty matrix")
    means = x.values.mean(axis=0)
    return x.with_values(x.values - means), means


def _svd_lapack(arr: np.ndarray) -> tuple[np.ndarray, np.ndarray, list[int]]:
    try:
        _, s, vt = np.linalg.svd(arr, full_matrices=False)
    except np.linalg.LinAlgError as e:
        raise NumericalFailure(f"SVD did not converge: {e}") from e
    return vt.T, s, []


def _svd_power(
    arr: np.ndarray, max_rank: int, tol: float, max_iters: int
) -> tuple[np.ndarray, np.ndarray, list[int]]:
    """Gram 행렬 XᵀX에 대한 power iteration + deflation.

    σ는 ‖X v‖로 계산해서 Gram 제곱에 의한 정밀도 손실을 줄인다.
    """
    d = arr.shape[1]
    gram = arr.T @ arr
    rng = np.random.default_rng(POWER_SEED)
    vectors: list[np.ndarray] = []
    sigmas: list[float] = []
    iterations: list[int] = []
    total = float(np.trace(gram)) if gram.size else 0.0

    for mode in range(max_rank):
        if total <= 0.0 or abs(float(np.trace(gram))) <= GRAM_DEFLATION_FLOOR * total:
            break
        v = rng.standard_normal(d)
        for prev in vectors:
            v -= (prev @ v) * prev
        v /= np.linalg.norm(v)
        converged = False
        it = 0
        while it < max_iters:
            it += 1
            w = gram @ v
            for prev in vectors:
                w -= (prev @ w) * prev
            norm = np.linalg.norm(w)
            if norm == 0.0:
                converged = True
                break
            w /= norm
            if w @ v < 0:
                w = -w
            change = np.linalg.norm(w - v)
            v = w
            if change < tol:
                converged = True
                break
        if not converged:
            raise NumericalFailure(
                f"power iteration for mode {mode} did not converge in {max_iters} iterations",
                iterations=it,
            )
        sigma = float(np.linalg.norm(arr @ v))
        vectors.append(v)
        sigmas.append(sigma)
        iterations.append(it)
        lam = float(v @ gram @ v)
        gram = gram - lam * np.outer(v, v)

    if not vectors:
        return np.zeros((d, 0)), np.zeros(0), iterations
    basis = np.column_stack(vectors)
    s = np.asarray(sigmas)
    # deflation 순서가 σ 순서와 다를 수 있음 (근접 고유값)
    order = np.argsort(-s, kind="stable")
    return basis[:, order], s[order], [iterations[i] for i in order]


def truncated_svd(
    x_centered: FeatureMatrix | np.ndarray,
    max_rank: int,
    tol: float = DEFAULT_SVD_TOL,
    max_iters: int = DEFAULT_SVD_MAX_ITERS,
    method: SvdMethod = "lapack",
) -> SvdResult:
    """상위 r = min(max_rank, 수치 랭크) 개 인자를 반환한다.

    method="lapack"은 numpy SVD, "power"는 Gram 행렬 power iteration.
    둘 다 같은 랭크 컷오프와 부호 규약을 적용한다.
    """
    arr = _as_array(x_centered)
    if arr.ndim != 2 or arr.size == 0:
        raise InvalidInput("truncated_svd needs a non-empty 2-D matrix")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput("matrix contains NaN or Inf")
    n, d = arr.shape
    if not 1 <= max_rank <= min(n, d):
        raise InvalidInput(f"max_rank must be in [1, {min(n, d)}], got {max_rank}")
    if tol <= 0:
        raise InvalidInput(f"tol must be positive, got {tol}")
    if max_iters < 1:
        raise InvalidInput(f"max_iters must be >= 1, got {max_iters}")

    if method == "lapack":
        basis, s, iterations = _svd_lapack(arr)
    elif method == "power":
        basis, s, iterations = _svd_power(arr, max_rank, tol, max_iters)
    else:
        raise InvalidInput(f"unknown SVD method: {method}")

    r = min(max_rank, numerical_rank(s))
    basis = _fix_signs(np.ascontiguousarray(basis[:, :r]))
    values = np.ascontiguousarray(s[:r])
    basis.setflags(write=False)
    values.setflags(write=False)
    return SvdResult(basis_u=basis, singular_values=values, rank=r, iterations=iterations[:r])


def rank_by_explained_variance(singular_values: Sequence[float], cutoff: float) -> int:
    """누적 σ² 비율이 cutoff 이상이 되는 최소 r."""
    s = np.asarray(singular_values, dtype=np.float64)
    if s.size == 0:
        raise InvalidInput("empty spectrum")
    if not 0.0 < cutoff <= 1.0:
        raise InvalidInput(f"cutoff must be in (0, 1], got {cutoff}")
    if np.any(s < 0) or np.any(np.diff(s) > 0):
        raise InvalidInput("singular values must be non-negative and sorted descending")
    energy = s ** 2
    total = energy.sum()
    if total == 0.0:
        raise DegenerateSpectrum("all singular values are zero")
    ratio = np.cumsum(energy) / total
    # 부동소수 누적 오차로 마지막 값이 1을 살짝 밑도는 경우
    ratio[-1] = 1.0
    return int(np.searchsorted(ratio, cutoff, side="left") + 1)


def row_l2_norms(x: FeatureMatrix | np.ndarray) -> np.ndarray:
    """행별 ℓ2 노름."""
    arr = _as_array(x)
    if arr.ndim != 2:
        raise InvalidInput("row_l2_norms needs a 2-D matrix")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput("matrix contains NaN or Inf")
    if arr.shape[0] == 0:
        return np.zeros(0)
    return np.sqrt(np.einsum("ij,ij->i", arr, arr))
