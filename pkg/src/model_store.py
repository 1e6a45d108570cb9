"""
HrPCA Model Store — 레벨 모델 번들 저장/로드
=============================================
단일 UTF-8 JSON 문서. 정규 직렬화 (키 정렬, 최단 왕복 실수, 개행 종료) 라서
같은 번들은 항상 같은 바이트가 된다.

    {
      "format_version": 1,
      "created_at": "2024-01-01T00:00:00Z",
      "fingerprint": {...},          # 학습에 쓴 생성기/계층/fit 설정
      "models": [LevelModel payload, ...]   # 세밀 → 거친 레벨 순서
    }

로드 시 모델마다 content_hash를 다시 계산해서 저장값과 비교한다.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

from src.canonical import canonical_dumps, to_plain
from src.csv_io import atomic_write_text
from src.errors import IntegrityError, ParseError, StorageError, VersionError
from src.hrpca_model import MODEL_VERSION, LevelModel

logger = logging.getLogger(__name__)

BUNDLE_FORMAT_VERSION = 1
SUPPORTED_FORMAT_VERSIONS = (1,)
TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%SZ"


def bundle_timestamp() -> str:
    """SOURCE_DATE_EPOCH가 있으면 그 시각 (재현 가능한 번들), 없으면 현재 UTC."""
    epoch = os.getenv("SOURCE_DATE_EPOCH")
    if epoch:
        moment = datetime.fromtimestamp(int(epoch), tz=timezone.utc)
    else:
        moment = datetime.now(timezone.utc)
    return moment.strftime(TIMESTAMP_FORMAT)


@dataclass(frozen=True)
class ModelBundle:
    models: tuple[LevelModel, ...]
    fingerprint: dict[str, Any] = field(default_factory=dict)
    created_at: str = ""
    format_version: int = BUNDLE_FORMAT_VERSION

    @property
    def level_names(self) -> list[str]:
        return [m.level_name for m in self.models]

    def model_map(self) -> dict[str, LevelModel]:
        return {m.level_name: m for m in self.models}

    def level(self, name: str) -> LevelModel:
        for m in self.models:
            if m.level_name == name:
                return m
        raise KeyError(f"bundle has no level '{name}' (levels: {', '.join(self.level_names)})")

    def to_payload(self) -> dict:
        return {
            "format_version": self.format_version,
            "created_at": self.created_at,
            "fingerprint": to_plain(self.fingerprint),
            "models": [m.sealed().to_payload() for m in self.models],
        }


def make_bundle(models: Sequence[LevelModel], fingerprint: dict | None = None) -> ModelBundle:
    return ModelBundle(
        models=tuple(models),
        fingerprint=dict(fingerprint or {}),
        created_at=bundle_timestamp(),
    )


# ── 저장/로드 ────────────────────────────────────────────────────

def save_bundle(bundle: ModelBundle, path: str | Path) -> Path:
    path = atomic_write_text(path, canonical_dumps(bundle.to_payload()))
    logger.info("saved bundle with %d level models to %s", len(bundle.models), path)
    return path


def _check_model_version(version: str, location: str) -> None:
    if version.split(".")[0] != MODEL_VERSION.split(".")[0]:
        raise VersionError(f"{location}: unsupported model version {version}")


def load_bundle(path: str | Path) -> ModelBundle:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"bundle not found: {path}")
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise StorageError(f"cannot read bundle: {e.strerror or e}", str(path)) from e
    except UnicodeDecodeError as e:
        raise ParseError(f"bundle is not UTF-8: {e.reason}", f"{path}:byte {e.start}") from e

    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, f"{path}:{e.lineno}:{e.colno}") from e
    if not isinstance(doc, dict):
        raise ParseError("bundle root must be an object", str(path))

    for key in ("format_version", "models"):
        if key not in doc:
            raise ParseError(f"missing top-level field '{key}'", str(path))
    version = doc["format_version"]
    # JSON true/1.0 도 == 1 이므로 정수 타입을 먼저 본다
    if type(version) is not int or version not in SUPPORTED_FORMAT_VERSIONS:
        raise VersionError(f"{path}: unsupported format_version {version!r}")
    if not isinstance(doc["models"], list):
        raise ParseError("'models' must be a list", str(path))

    models = []
    for i, payload in enumerate(doc["models"]):
        location = f"{path}:models[{i}]"
        if not isinstance(payload, dict):
            raise ParseError("model entry must be an object", location)
        model = LevelModel.from_payload(payload, location)
        _check_model_version(model.version, location)
        expected = model.compute_hash()
        if expected != model.content_hash:
            raise IntegrityError(
                f"{location}: content_hash mismatch for level '{model.level_name}' "
                f"(stored {model.content_hash[:12]}…, computed {expected[:12]}…)"
            )
        models.append(model)

    return ModelBundle(
        models=tuple(models),
        fingerprint=doc.get("fingerprint") or {},
        created_at=str(doc.get("created_at", "")),
        format_version=int(doc["format_version"]),
    )
