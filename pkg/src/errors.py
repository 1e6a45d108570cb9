"""
HrPCA Errors — 예외 계층 + CLI 종료 코드
=========================================
모든 모듈이 공유하는 예외. 각 예외는 CLI가 그대로 쓰는 exit_code를 가진다.

    0  성공
    2  입력/설정 오류
    3  수치 실패 (수렴 실패, 퇴화 스펙트럼)
    4  스키마 불일치
"""

# ── 종료 코드 ────────────────────────────────────────────────────
EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3
EXIT_SCHEMA = 4


class HrpcaError(Exception):
    """패키지 공통 기반 예외."""
    exit_code = EXIT_INPUT


# ── 입력/설정 오류 (exit 2) ──────────────────────────────────────

class InvalidInput(HrpcaError, ValueError):
    """빈 행렬, 비유한 값, 잘못된 인덱스 등."""


class InvalidConfig(HrpcaError, ValueError):
    """설정값이 허용 범위를 벗어남."""


class ShapeError(HrpcaError, ValueError):
    """행 수가 fan-out으로 나누어떨어지지 않는 등 모양 불일치."""


class ParseError(HrpcaError, ValueError):
    """파일 파싱 실패. location에 경로/행/열 정보."""

    def __init__(self, message: str, location: str = ""):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class StorageError(HrpcaError, OSError):
    """번들/CSV 쓰기 실패."""

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{message} ({path})" if path else message)


class VersionError(HrpcaError):
    """지원하지 않는 format_version."""


class IntegrityError(HrpcaError):
    """저장된 content_hash와 재계산 해시가 다름."""


# ── 수치 오류 (exit 3) ──────────────────────────────────────────

class NumericalFailure(HrpcaError, ArithmeticError):
    """반복 알고리즘이 max_iters 안에 수렴하지 못함."""
    exit_code = EXIT_NUMERICAL

    def __init__(self, message: str, iterations: int = 0):
        self.iterations = iterations
        super().__init__(message)


class DegenerateSpectrum(HrpcaError, ArithmeticError):
    """모든 특이값이 0 (모든 행이 동일)."""
    exit_code = EXIT_NUMERICAL


# ── 스키마 오류 (exit 4) ────────────────────────────────────────

class SchemaMismatch(HrpcaError, ValueError):
    """모델 feature 목록과 입력 열이 다름."""
    exit_code = EXIT_SCHEMA
