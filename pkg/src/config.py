"""
HrPCA Config — 실험 설정 문서, 환경 변수, 로깅
===============================================
실험 설정은 JSON 문서 하나 (generator / hierarchy / fit / attribution 섹션).
없는 섹션이나 키는 각 모듈의 기본값. 모르는 키는 InvalidConfig.

환경 변수 (.env 지원):
    HRPCA_CONFIG       기본 설정 파일 경로
    HRPCA_OUT_DIR      기본 출력 디렉터리 (out)
    HRPCA_LOG_LEVEL    로그 레벨 (WARNING)
    SOURCE_DATE_EPOCH  번들 created_at 고정 (model_store 참고)
"""

from __future__ import annotations

import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import pandas as pd
from dotenv import load_dotenv

from src.attribution import DEFAULT_TOP_K, DEFAULT_WINDOW, DEFAULT_Z_THRESHOLD
from src.errors import InvalidConfig, ParseError
from src.hierarchy import HierarchySpec
from src.hrpca_model import FitConfig
from src.synthgen import GenConfig

load_dotenv()

# ── 경로/환경 ────────────────────────────────────────────────────
DEFAULT_CONFIG_PATH = Path(__file__).resolve().parent.parent / "config" / "experiment.json"
DEFAULT_OUT_DIR = "out"
DEFAULT_LOG_LEVEL = "WARNING"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def config_path() -> Path | None:
    env = os.getenv("HRPCA_CONFIG")
    if env:
        return Path(env)
    return DEFAULT_CONFIG_PATH if DEFAULT_CONFIG_PATH.exists() else None


def default_out_dir() -> Path:
    return Path(os.getenv("HRPCA_OUT_DIR", DEFAULT_OUT_DIR))


def configure_logging(level: str | None = None) -> None:
    """stderr 핸들러 하나. 인자가 없으면 HRPCA_LOG_LEVEL."""
    name = (level or os.getenv("HRPCA_LOG_LEVEL", DEFAULT_LOG_LEVEL)).upper()
    numeric = logging.getLevelName(name)
    if not isinstance(numeric, int):
        raise InvalidConfig(f"unknown log level: {level}")
    logging.basicConfig(level=numeric, format=LOG_FORMAT, stream=sys.stderr, force=True)


def parse_duration(text: str | pd.Timedelta) -> pd.Timedelta:
    """'24h', '90min', '1 day' 같은 기간 문자열."""
    try:
        value = pd.Timedelta(text)
    except (ValueError, TypeError) as e:
        raise InvalidConfig(f"bad duration {text!r}: {e}") from e
    if pd.isna(value) or value < pd.Timedelta(0):
        raise InvalidConfig(f"duration must be non-negative, got {text!r}")
    return value


# ── 설정 문서 ────────────────────────────────────────────────────

@dataclass(frozen=True)
class AttributionConfig:
    z_threshold: float = DEFAULT_Z_THRESHOLD
    top_k: int = DEFAULT_TOP_K
    window: pd.Timedelta = DEFAULT_WINDOW
    mode_names: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.z_threshold <= 0:
            raise InvalidConfig("attribution.z_threshold must be > 0")
        if self.top_k < 1:
            raise InvalidConfig("attribution.top_k must be >= 1")
        object.__setattr__(self, "window", parse_duration(self.window))
        object.__setattr__(self, "mode_names", {int(k): str(v) for k, v in self.mode_names.items()})


@dataclass(frozen=True)
class ExperimentConfig:
    generator: GenConfig = field(default_factory=GenConfig)
    hierarchy: HierarchySpec = field(default_factory=HierarchySpec)
    fit: FitConfig = field(default_factory=FitConfig)
    attribution: AttributionConfig = field(default_factory=AttributionConfig)

    def fingerprint(self) -> dict[str, Any]:
        """번들에 기록할 학습 설정 요약."""
        return {
            "generator": asdict(self.generator),
            "hierarchy": asdict(self.hierarchy),
            "fit": asdict(self.fit),
        }


SECTIONS = {
    "generator": GenConfig,
    "hierarchy": HierarchySpec,
    "fit": FitConfig,
    "attribution": AttributionConfig,
}


def _build_section(name: str, cls, raw: Any):
    if not isinstance(raw, dict):
        raise InvalidConfig(f"section '{name}' must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise InvalidConfig(f"unknown keys in '{name}': {', '.join(unknown)}")
    try:
        return cls(**raw)
    except TypeError as e:
        raise InvalidConfig(f"section '{name}': {e}") from e


def experiment_from_dict(doc: dict) -> ExperimentConfig:
    unknown = sorted(set(doc) - set(SECTIONS))
    if unknown:
        raise InvalidConfig(f"unknown config sections: {', '.join(unknown)}")
    parts = {name: _build_section(name, cls, doc[name]) for name, cls in SECTIONS.items() if name in doc}
    return ExperimentConfig(**parts)


def load_experiment(path: str | Path | None = None) -> ExperimentConfig:
    """경로 → HRPCA_CONFIG → config/experiment.json → 기본값 순."""
    path = Path(path) if path else config_path()
    if path is None:
        return ExperimentConfig()
    if not path.exists():
        raise FileNotFoundError(f"config not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, f"{path}:{e.lineno}:{e.colno}") from e
    if not isinstance(doc, dict):
        raise InvalidConfig(f"{path}: config root must be an object")
    return experiment_from_dict(doc)
