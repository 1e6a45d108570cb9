"""
HrPCA Audit CLI
================
계층형 데이터 감사 파이프라인 명령줄 진입점.

Usage:
    poetry run hrpca generate --out out --seed 42
    poetry run hrpca fit --out out
    poetry run hrpca audit --out out [--threshold 5.24] [--level interaction]
    poetry run hrpca sweep --out out
    poetry run hrpca evaluate --out out [--train out/train] [--format csv|table]
    poetry run hrpca attribute --out out [--changelog changes.csv] [--window 24h]
    poetry run hrpca report --out out
    poetry run hrpca run --out out --verbose       # 전체 파이프라인 (LangGraph)

종료 코드: 0 성공, 2 입력/설정 오류, 3 수치 실패, 4 스키마 불일치.
"""

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from tabulate import tabulate

from src import audit_steps
from src.audit_graph import run_pipeline
from src.config import ExperimentConfig, configure_logging, default_out_dir, load_experiment, parse_duration
from src.errors import EXIT_INPUT, EXIT_OK, HrpcaError
from src.evalmetrics import format_table
from src.model_store import load_bundle

logger = logging.getLogger(__name__)


# ── 인자 → 설정 ──────────────────────────────────────────────────

def _experiment(args) -> ExperimentConfig:
    cfg = load_experiment(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, generator=replace(cfg.generator, seed=args.seed))
    if getattr(args, "window", None):
        cfg = replace(cfg, attribution=replace(cfg.attribution, window=parse_duration(args.window)))
    return cfg


def _out(args) -> Path:
    return Path(args.out) if args.out else default_out_dir()


def _bundle_path(args) -> Path:
    return Path(args.bundle) if args.bundle else _out(args) / audit_steps.BUNDLE_FILE


def _data_dir(args) -> Path:
    return Path(args.data) if args.data else _out(args) / audit_steps.TEST_DIR


def _optional_path(value: str | None) -> Path | None:
    return Path(value) if value else None


# ── 서브커맨드 ───────────────────────────────────────────────────

def cmd_generate(args) -> int:
    cfg = _experiment(args)
    written = audit_steps.generate_step(cfg, _out(args))
    print(f"wrote {len(written)} files to {_out(args)}")
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = _experiment(args)
    train = Path(args.train) if args.train else _out(args) / audit_steps.TRAIN_DIR
    bundle = audit_steps.fit_step(cfg, train, _bundle_path(args))
    rows = [(m.level_name, m.rank, m.threshold, m.content_hash[:12]) for m in bundle.models]
    print(tabulate(rows, headers=["Level", "Rank", "Threshold", "Hash"], floatfmt=".4f"))
    return EXIT_OK


def cmd_audit(args) -> int:
    bundle = load_bundle(_bundle_path(args))
    reports = audit_steps.audit_step(
        bundle, _data_dir(args), _out(args) / audit_steps.AUDIT_DIR,
        threshold=args.threshold, level=args.level,
    )
    rows = [(r.level, r.threshold, r.n_rows, r.n_flagged, r.max_score) for r in reports]
    print(tabulate(rows, headers=["Level", "Threshold", "Rows", "Flagged", "Max score"], floatfmt=".2f"))
    return EXIT_OK


def cmd_sweep(args) -> int:
    bundle = load_bundle(_bundle_path(args))
    results = audit_steps.sweep_step(
        bundle, _data_dir(args), _out(args) / audit_steps.AUDIT_DIR, level=args.level
    )
    rows = [(name, r.best_threshold, r.best_f1, r.thresholds.size) for name, r in results.items()]
    print(tabulate(rows, headers=["Level", "Best threshold", "F1", "Grid points"], floatfmt=".2f"))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    bundle = load_bundle(_bundle_path(args))
    rows, baseline = audit_steps.evaluate_step(
        bundle, _data_dir(args), _out(args) / audit_steps.AUDIT_DIR,
        train_dir=_optional_path(args.train), level=args.level,
    )
    sys.stdout.write(format_table(rows, args.format))
    if baseline:
        sys.stdout.write("\nRule baseline (per-column 3-sigma)\n")
        sys.stdout.write(format_table(baseline, args.format))
    return EXIT_OK


def cmd_attribute(args) -> int:
    cfg = _experiment(args)
    bundle = load_bundle(_bundle_path(args))
    changelog = _optional_path(args.changelog)
    if changelog is not None and not changelog.exists():
        raise FileNotFoundError(f"change log not found: {changelog}")
    counts = audit_steps.attribute_step(
        bundle, _data_dir(args), _out(args) / audit_steps.AUDIT_DIR, cfg.attribution,
        train_dir=_optional_path(args.train), changelog=changelog,
        threshold=args.threshold, level=args.level,
    )
    for level, n in counts.items():
        print(f"{level}: {n} attributed rows")
    return EXIT_OK


def cmd_report(args) -> int:
    bundle = load_bundle(_bundle_path(args))
    written = audit_steps.report_step(
        bundle, _data_dir(args), _out(args) / audit_steps.REPORT_DIR,
        threshold=args.threshold, level=args.level,
    )
    print(f"wrote {len(written)} report files to {_out(args) / audit_steps.REPORT_DIR}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _experiment(args)
    final = run_pipeline(cfg, _out(args), changelog=_optional_path(args.changelog), verbose=args.verbose)
    sys.stdout.write(format_table(final["evaluation"], args.format))
    return EXIT_OK


# ── 파서 ─────────────────────────────────────────────────────────

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hrpca", description="Hierarchical robust-PCA data audit.")
    parser.add_argument("--log-level", help="로그 레벨 (기본: HRPCA_LOG_LEVEL 또는 WARNING)")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, func, help_text: str, *flags: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="실험 설정 JSON (기본: HRPCA_CONFIG 또는 config/experiment.json)")
        p.add_argument("--out", help="출력 루트 디렉터리 (기본: HRPCA_OUT_DIR 또는 out)")
        if "seed" in flags:
            p.add_argument("--seed", type=int, help="generator.seed 덮어쓰기")
        if "bundle" in flags:
            p.add_argument("--bundle", help="모델 번들 경로 (기본: <out>/bundle.json)")
        if "data" in flags:
            p.add_argument("--data", help="감사 대상 레벨 CSV 디렉터리 (기본: <out>/test)")
        if "train" in flags:
            p.add_argument("--train", help="학습 데이터 디렉터리")
        if "level" in flags:
            p.add_argument("--level", help="한 레벨만 처리")
        if "threshold" in flags:
            p.add_argument("--threshold", type=float, help="저장된 임계값 대신 사용할 τ")
        if "window" in flags:
            p.add_argument("--window", help="변경 로그 상관 창 (예: 24h, 90min)")
        if "changelog" in flags:
            p.add_argument("--changelog", help="변경 로그 CSV (timestamp,description)")
        if "format" in flags:
            p.add_argument("--format", choices=["csv", "table"], default="table")
        if "verbose" in flags:
            p.add_argument("-v", "--verbose", action="store_true")
        p.set_defaults(func=func)
        return p

    add("generate", cmd_generate, "합성 계층 데이터 생성", "seed")
    add("fit", cmd_fit, "레벨별 모델 학습 + 번들 저장", "bundle", "train")
    add("audit", cmd_audit, "점수/플래그/잔차 계산", "bundle", "data", "level", "threshold")
    add("sweep", cmd_sweep, "임계값 스윕", "bundle", "data", "level")
    add("evaluate", cmd_evaluate, "레벨별 최적 성능 표", "bundle", "data", "train", "level", "format")
    add("attribute", cmd_attribute, "플래그 행 원인 추적",
        "bundle", "data", "train", "level", "threshold", "window", "changelog")
    add("report", cmd_report, "잔차 히트맵 + 점수 플롯 SVG", "bundle", "data", "level", "threshold")
    add("run", cmd_run, "전체 파이프라인 실행", "seed", "changelog", "format", "verbose")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        configure_logging(args.log_level)
        return args.func(args)
    except HrpcaError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
