"""
HrPCA Canonical JSON — 정규 직렬화 + 콘텐츠 해시
=================================================
키 정렬, 최단 왕복(shortest round-trip) 실수 표기, 개행 종료.
같은 객체 → 같은 바이트 → 같은 해시.
"""

import hashlib
import json
from typing import Any

import numpy as np


def to_plain(obj: Any) -> Any:
    """numpy 타입을 JSON 기본 타입으로 변환 (재귀)."""
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    return obj


def canonical_dumps(payload: Any) -> str:
    # repr(float)가 최단 왕복 표기. NaN/Inf는 허용하지 않는다.
    return json.dumps(
        to_plain(payload),
        sort_keys=True,
        indent=2,
        ensure_ascii=False,
        allow_nan=False,
    ) + "\n"


def content_digest(payload: Any) -> str:
    """정규 직렬화 바이트의 SHA-256 hex digest."""
    return hashlib.sha256(canonical_dumps(payload).encode("utf-8")).hexdigest()
