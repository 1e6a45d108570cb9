"""
HrPCA Pipeline Nodes — run 그래프 노드
=======================================
generate, fit, audit, evaluate, attribute, report + 라우터.
각 노드는 audit_steps 의 단계 하나를 호출하고 state 델타를 반환한다.
"""

from pathlib import Path

from src import audit_steps
from src.graph_state import AuditState


def generate_node(state: AuditState) -> dict:
    written = audit_steps.generate_step(state["experiment"], Path(state["out_dir"]))
    return {"written": [str(p) for p in written]}


def fit_node(state: AuditState) -> dict:
    bundle = audit_steps.fit_step(
        state["experiment"], Path(state["train_dir"]), Path(state["bundle_path"])
    )
    return {"bundle": bundle, "written": [state["bundle_path"]]}


def audit_node(state: AuditState) -> dict:
    reports = audit_steps.audit_step(
        state["bundle"], Path(state["test_dir"]), Path(state["audit_dir"])
    )
    return {"audit_reports": reports}


def evaluate_node(state: AuditState) -> dict:
    rows, baseline = audit_steps.evaluate_step(
        state["bundle"], Path(state["test_dir"]), Path(state["audit_dir"]),
        train_dir=Path(state["train_dir"]),
    )
    return {"evaluation": rows, "baseline": baseline}


def audit_router(state: AuditState) -> str:
    """플래그가 하나라도 있으면 attribute, 없으면 report 로 직행."""
    if any(r.n_flagged for r in state.get("audit_reports", [])):
        return "attribute"
    return "report"


def attribute_node(state: AuditState) -> dict:
    changelog = Path(state["changelog"]) if state.get("changelog") else None
    counts = audit_steps.attribute_step(
        state["bundle"], Path(state["test_dir"]), Path(state["audit_dir"]),
        state["experiment"].attribution,
        train_dir=Path(state["train_dir"]),
        changelog=changelog,
    )
    return {"attribution_counts": counts}


def report_node(state: AuditState) -> dict:
    written = audit_steps.report_step(
        state["bundle"], Path(state["test_dir"]), Path(state["report_dir"])
    )
    return {"written": [str(p) for p in written]}
