"""
HrPCA Audit Graph (LangGraph end-to-end run)
=============================================
run 서브커맨드의 전체 파이프라인을 LangGraph StateGraph 로 실행한다.

Architecture:
    Generate → Fit → Audit → Evaluate
    → (플래그 있음 → Attribute → Report → END)
    → (플래그 없음 → Report → END)

verbose 모드는 노드가 끝날 때마다 회색 진행 메시지를 stdout 에 쓴다.
"""

import sys
import time as _time
from pathlib import Path

from langgraph.graph import END, StateGraph

from src.audit_steps import AUDIT_DIR, BUNDLE_FILE, REPORT_DIR, TEST_DIR, TRAIN_DIR
from src.config import ExperimentConfig
from src.graph_state import AuditState
from src.nodes_pipeline import (
    generate_node, fit_node, audit_node, evaluate_node,
    audit_router, attribute_node, report_node,
)


# ── 그래프 구성 ──────────────────────────────────────────────────

def build_graph() -> StateGraph:
    graph = StateGraph(AuditState)

    graph.add_node("generate", generate_node)
    graph.add_node("fit", fit_node)
    graph.add_node("audit", audit_node)
    graph.add_node("evaluate", evaluate_node)
    graph.add_node("attribute", attribute_node)
    graph.add_node("report", report_node)

    graph.set_entry_point("generate")
    graph.add_edge("generate", "fit")
    graph.add_edge("fit", "audit")
    graph.add_edge("audit", "evaluate")

    # evaluate 후: 플래그가 있을 때만 attribute
    graph.add_conditional_edges("evaluate", audit_router, {
        "attribute": "attribute",
        "report": "report",
    })
    graph.add_edge("attribute", "report")
    graph.add_edge("report", END)

    return graph


# ── 진행 메시지 ──────────────────────────────────────────────────

def _fmt_generate(state: dict) -> str | None:
    cfg = state["experiment"]
    return f"합성 데이터 생성: seed {cfg.generator.seed}, 레벨 {' → '.join(cfg.hierarchy.levels)}"


def _fmt_fit(state: dict) -> str | None:
    bundle = state.get("bundle")
    if bundle is None:
        return None
    lines = [f"  {m.level_name}: rank {m.rank}, τ = {m.threshold:.4f}" for m in bundle.models]
    return f"모델 학습 완료 ({len(bundle.models)}개 레벨)\n" + "\n".join(lines)


def _fmt_audit(state: dict) -> str | None:
    reports = state.get("audit_reports", [])
    lines = [f"  {r.level}: {r.n_flagged}/{r.n_rows} 플래그" for r in reports]
    return "감사 완료\n" + "\n".join(lines)


def _fmt_evaluate(state: dict) -> str | None:
    rows = state.get("evaluation", [])
    lines = [f"  {r.level}: F1 {r.f1:.2f} (τ = {r.threshold:.2f})" for r in rows]
    return "평가 완료 (최적 임계값)\n" + "\n".join(lines)


def _fmt_attribute(state: dict) -> str | None:
    counts = state.get("attribution_counts", {})
    return "원인 추적: " + ", ".join(f"{k} {v}행" for k, v in counts.items())


_NODE_FORMATTERS: dict[str, callable] = {
    "generate": _fmt_generate,
    "fit": _fmt_fit,
    "audit": _fmt_audit,
    "evaluate": _fmt_evaluate,
    "attribute": _fmt_attribute,
    "report": lambda s: f"리포트 작성 완료: {s.get('report_dir', '')}",
}


def _format_node_progress(node_name: str, state: dict) -> str | None:
    """각 노드 완료 시 출력할 요약 메시지. None이면 출력 안 함."""
    formatter = _NODE_FORMATTERS.get(node_name)
    return formatter(state) if formatter else None


# ── 실행 함수 ────────────────────────────────────────────────────

def initial_state(cfg: ExperimentConfig, out_dir: Path, changelog: Path | None = None) -> AuditState:
    out = Path(out_dir)
    return {
        "experiment": cfg,
        "out_dir": str(out),
        "train_dir": str(out / TRAIN_DIR),
        "test_dir": str(out / TEST_DIR),
        "audit_dir": str(out / AUDIT_DIR),
        "report_dir": str(out / REPORT_DIR),
        "bundle_path": str(out / BUNDLE_FILE),
        "changelog": str(changelog) if changelog else "",
        "bundle": None,
        "audit_reports": [],
        "evaluation": [],
        "baseline": [],
        "attribution_counts": {},
        "written": [],
    }


def run_pipeline(
    cfg: ExperimentConfig, out_dir: Path, changelog: Path | None = None, verbose: bool = False
) -> dict:
    """generate → ... → report 를 실행하고 최종 state 를 반환한다."""
    if changelog is not None and not Path(changelog).exists():
        raise FileNotFoundError(f"change log not found: {changelog}")

    app = build_graph().compile()
    state = initial_state(cfg, out_dir, changelog)

    if not verbose:
        return app.invoke(state)

    # ── verbose 모드: stream으로 노드별 진행 상황 출력 ──
    _write = lambda s: (sys.stdout.write(s), sys.stdout.flush())
    step = 0
    t0 = _time.time()
    last_state = dict(state)

    for chunk in app.stream(state, stream_mode="updates"):
        for node_name, update in chunk.items():
            step += 1
            elapsed = _time.time() - t0
            update = update or {}
            # written 은 reducer 필드라 누적
            merged_written = last_state.get("written", []) + update.get("written", [])
            last_state = {**last_state, **update, "written": merged_written}
            msg = _format_node_progress(node_name, last_state)
            if msg:
                _write(f"\033[90m[{elapsed:5.1f}s] Step {step}: {node_name}\033[0m\n")
                for line in msg.split("\n"):
                    _write(f"\033[90m  {line}\033[0m\n")
                _write("\n")

    total = _time.time() - t0
    _write(f"\033[90m[{total:.1f}s] 완료 ({step} steps)\033[0m\n\n")
    return last_state
