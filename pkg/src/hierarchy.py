"""
HrPCA Hierarchy — 다단계 집계 스키마 + 롤업
============================================
interaction → session → profile → account 처럼 가장 세밀한 레벨부터 순서대로.
부모 p는 연속 블록 [p·f, (p+1)·f) 의 자식들을 열 단위로 집계한다 (mean 또는 sum).
정답 라벨은 OR 규칙으로 위로 전파 (자식 하나라도 이상이면 부모도 이상).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from src.errors import InvalidConfig, ShapeError
from src.linalg_core import FeatureMatrix

AggOp = Literal["mean", "sum"]

# ── 기본 계층 (4레벨, fan-out 5) ─────────────────────────────────
DEFAULT_LEVELS = ("interaction", "session", "profile", "account")
DEFAULT_FAN_OUT = (5, 5, 5)
DEFAULT_AGG_OP: AggOp = "mean"


def level_row_ids(level_name: str, n_rows: int) -> tuple[str, ...]:
    return tuple(f"{level_name}-{i:06d}" for i in range(n_rows))


@dataclass(frozen=True)
class HierarchySpec:
    """levels는 세밀 → 거친 순서. fan_out[i]는 levels[i] → levels[i+1]."""
    levels: tuple[str, ...] = DEFAULT_LEVELS
    fan_out: tuple[int, ...] = DEFAULT_FAN_OUT
    agg_op: AggOp = DEFAULT_AGG_OP

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        object.__setattr__(self, "fan_out", tuple(int(f) for f in self.fan_out))
        if len(self.levels) < 2:
            raise InvalidConfig("a hierarchy needs at least 2 levels")
        if len(set(self.levels)) != len(self.levels):
            raise InvalidConfig("level names must be unique")
        if len(self.fan_out) != len(self.levels) - 1:
            raise InvalidConfig(
                f"{len(self.levels)} levels need {len(self.levels) - 1} fan-outs, got {len(self.fan_out)}"
            )
        if any(f < 1 for f in self.fan_out):
            raise InvalidConfig("all fan-outs must be >= 1")
        if self.agg_op not in ("mean", "sum"):
            raise InvalidConfig(f"unknown agg_op: {self.agg_op}")

    @property
    def total_fan_out(self) -> int:
        return int(np.prod(self.fan_out))

    def level_sizes(self, n_base_rows: int) -> list[int]:
        """가장 세밀한 레벨부터 레벨별 행 수."""
        if n_base_rows % self.total_fan_out != 0:
            raise ShapeError(
                f"{n_base_rows} base rows are not divisible by total fan-out {self.total_fan_out}"
            )
        sizes = [n_base_rows]
        for f in self.fan_out:
            sizes.append(sizes[-1] // f)
        return sizes


@dataclass
class LevelDataset:
    """한 레벨의 행렬 + (선택) 정답 라벨 + (선택) 부모 인덱스 맵."""
    level_name: str
    matrix: FeatureMatrix
    labels: np.ndarray | None = None
    parent_of: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=bool)
            if self.labels.shape != (self.matrix.n_rows,):
                raise ShapeError(
                    f"[{self.level_name}] {self.labels.size} labels for {self.matrix.n_rows} rows"
                )

    @property
    def n_rows(self) -> int:
        return self.matrix.n_rows

    def children_of(self, parent_row: int) -> np.ndarray:
        """parent_of가 기록된 경우 해당 부모의 자식 행 인덱스."""
        if self.parent_of is None:
            return np.zeros(0, dtype=np.intp)
        return np.flatnonzero(self.parent_of == parent_row)


# ── 연산 ─────────────────────────────────────────────────────────

def _check_divisible(n_rows: int, fan_out: int) -> None:
    if fan_out < 1:
        raise ShapeError(f"fan_out must be >= 1, got {fan_out}")
    if n_rows % fan_out != 0:
        raise ShapeError(f"{n_rows} rows are not divisible by fan_out {fan_out}")


def propagate_labels(child_labels, fan_out: int) -> np.ndarray:
    """부모 라벨 = 자식 라벨의 OR."""
    labels = np.asarray(child_labels, dtype=bool)
    _check_divisible(labels.size, fan_out)
    return labels.reshape(-1, fan_out).any(axis=1)


def rollup(
    child: LevelDataset,
    fan_out: int,
    agg_op: AggOp = DEFAULT_AGG_OP,
    parent_level: str | None = None,
) -> LevelDataset:
    """자식 블록을 열 단위로 집계한 부모 레벨. child.parent_of도 기록한다."""
    n, d = child.matrix.n_rows, child.matrix.n_cols
    _check_divisible(n, fan_out)
    blocks = child.matrix.values.reshape(n // fan_out, fan_out, d)
    if agg_op == "mean":
        values = blocks.mean(axis=1)
    elif agg_op == "sum":
        values = blocks.sum(axis=1)
    else:
        raise InvalidConfig(f"unknown agg_op: {agg_op}")

    name = parent_level or f"{child.level_name}_x{fan_out}"
    matrix = FeatureMatrix(values, child.matrix.col_names, level_row_ids(name, values.shape[0]))
    labels = propagate_labels(child.labels, fan_out) if child.labels is not None else None
    child.parent_of = np.arange(n, dtype=np.intp) // fan_out
    return LevelDataset(level_name=name, matrix=matrix, labels=labels)


def build_level_chain(base: LevelDataset, spec: HierarchySpec) -> list[LevelDataset]:
    """가장 세밀한 레벨부터 한 단계씩 롤업한 전체 체인."""
    if base.level_name != spec.levels[0]:
        raise ShapeError(
            f"base level '{base.level_name}' does not match finest level '{spec.levels[0]}'"
        )
    spec.level_sizes(base.n_rows)
    chain = [base]
    for fan_out, parent_name in zip(spec.fan_out, spec.levels[1:]):
        chain.append(rollup(chain[-1], fan_out, spec.agg_op, parent_level=parent_name))
    return chain
