"""
HrPCA Graph State — run 파이프라인 TypedDict
=============================================
모든 노드 모듈이 import하는 기반 모듈.
"""

import operator
from typing import Annotated, Any, TypedDict


class AuditState(TypedDict):
    experiment: Any              # ExperimentConfig
    out_dir: str
    train_dir: str
    test_dir: str
    audit_dir: str
    report_dir: str
    bundle_path: str
    changelog: str               # 빈 문자열이면 변경 로그 없음
    bundle: Any                  # ModelBundle (fit 이후)
    audit_reports: list          # AuditReport, 레벨 순서
    evaluation: list             # LevelPerformance
    baseline: list               # LevelPerformance (규칙 기준선)
    attribution_counts: dict[str, int]
    written: Annotated[list[str], operator.add]   # 노드별 출력 파일 누적
