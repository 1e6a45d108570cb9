"""evalmetrics — 혼동 행렬, P/R/F1, 스윕, 계층 평가, 표 출력."""

import itertools

import numpy as np
import pytest
from sklearn.metrics import f1_score

from src.errors import InvalidInput, ShapeError
from src.evalmetrics import (
    Confusion,
    confusion,
    evaluate_baseline,
    evaluate_hierarchy,
    f1,
    f1_from_rates,
    format_table,
    precision,
    recall,
    rule_baseline_scores,
    threshold_sweep,
)
from src.hrpca_model import FitConfig, fit
from src.linalg_core import FeatureMatrix
from src.synthgen import GenConfig, generate_experiment


# ── 혼동 행렬 + 지표 ─────────────────────────────────────────────

def test_confusion_counts():
    assert confusion([1, 0, 1], [1, 0, 0]) == Confusion(tp=1, fp=1, fn=0, tn=1)
    assert confusion([True] * 4, [True] * 4) == Confusion(tp=4)
    assert confusion([], []) == Confusion()


def test_confusion_length_mismatch():
    with pytest.raises(ShapeError):
        confusion([1, 0], [1])


def test_metric_values():
    c = Confusion(tp=7, fp=1, fn=0, tn=3)
    assert precision(c) == 0.875
    assert recall(c) == 1.0
    assert f1(c) == pytest.approx(2 * 0.875 / 1.875)


def test_zero_denominator_convention():
    c = Confusion(tn=5)
    assert precision(c) == 0.0 and recall(c) == 0.0 and f1(c) == 0.0


def test_profile_row_spot_check():
    assert round(f1_from_rates(0.88, 1.00), 2) == 0.94


def test_metric_properties(rng):
    for _ in range(200):
        tp, fp, fn, tn = rng.integers(0, 6, size=4)
        c = Confusion(int(tp), int(fp), int(fn), int(tn))
        p, r, f = precision(c), recall(c), f1(c)
        assert 0.0 <= p <= 1.0 and 0.0 <= r <= 1.0 and 0.0 <= f <= 1.0
        if p + r > 0:
            assert f == pytest.approx(2 * p * r / (p + r))
        assert min(p, r) - 1e-12 <= f <= max(p, r) + 1e-12


# ── 스윕 ─────────────────────────────────────────────────────────

def test_sweep_picks_midpoint():
    result = threshold_sweep([1.0, 2.0, 10.0], [False, False, True])
    assert result.best_f1 == 1.0
    assert result.best_threshold == 6.0
    np.testing.assert_allclose(result.thresholds, [0.0, 1.5, 6.0, 11.0])


def test_sweep_no_positives_reports_point_above_max():
    result = threshold_sweep([0.5, 0.7, 3.0], [False, False, False])
    assert result.best_f1 == 0.0
    assert result.best_threshold == 4.0
    assert result.confusion_at(result.best_index).fp == 0


def test_sweep_identical_scores():
    result = threshold_sweep([2.0, 2.0, 2.0, 2.0], [True, False, True, False])
    assert result.thresholds.tolist() == [1.0, 3.0]
    assert result.best_f1 == pytest.approx(f1(Confusion(tp=2, fp=2)))
    assert result.best_threshold == 1.0


def test_sweep_errors():
    with pytest.raises(InvalidInput):
        threshold_sweep([], [])
    with pytest.raises(ShapeError):
        threshold_sweep([1.0, 2.0], [True])
    with pytest.raises(InvalidInput):
        threshold_sweep([1.0, 2.0], [True, False], grid=[2.0, 1.0])


def test_sweep_matches_brute_force(rng):
    for _ in range(100):
        n = int(rng.integers(1, 9))
        scores = np.round(rng.random(n) * 4, 1)
        labels = rng.random(n) < 0.4
        # 임계값으로 만들 수 있는 플래그 집합은 score > cut 형태뿐
        best = max(
            f1_score(labels, scores > cut, zero_division=0)
            for cut in itertools.chain([-np.inf], np.unique(scores))
        )
        assert threshold_sweep(scores, labels).best_f1 == pytest.approx(best)


def test_sweep_counts_match_direct_confusion(rng):
    scores = np.round(rng.random(40) * 5, 1)
    labels = rng.random(40) < 0.3
    result = threshold_sweep(scores, labels, grid=[-1.0, 0.5, 2.0, 2.0, 4.9, 6.0])
    for i, t in enumerate(result.thresholds):
        assert result.confusion_at(i) == confusion(scores > t, labels)


def test_sweep_large_table(rng):
    n = 200_000
    scores = rng.random(n)
    labels = scores > 0.9
    result = threshold_sweep(scores, labels)
    assert result.thresholds.size == np.unique(scores).size + 1
    assert result.best_f1 == 1.0
    assert result.confusion_at(result.best_index).fp == 0


def test_sweep_frame_columns():
    frame = threshold_sweep([1.0, 2.0], [False, True]).to_frame()
    assert list(frame.columns) == ["threshold", "tp", "fp", "fn", "tn", "precision", "recall", "f1"]


# ── 계층 평가 ────────────────────────────────────────────────────

def _models(train_chain):
    return {ds.level_name: fit(ds.matrix, FitConfig(rank=1), ds.level_name) for ds in train_chain}


def test_evaluate_all_clean_chain(small_spec):
    cfg = GenConfig(n_base_rows=125, n_features=6, seed=7, anomaly_fraction=0.0)
    train_chain, test_chain = generate_experiment(cfg, small_spec)
    rows = evaluate_hierarchy(_models(train_chain), test_chain)
    assert [r.level for r in rows] == list(small_spec.levels)
    assert all(r.f1 == 0.0 for r in rows)


def test_evaluate_missing_labels(small_gen, small_spec):
    train_chain, test_chain = generate_experiment(small_gen, small_spec)
    test_chain[1].labels = None
    with pytest.raises(InvalidInput):
        evaluate_hierarchy(_models(train_chain), test_chain)


def test_evaluate_finest_level_perfect(small_gen, small_spec):
    train_chain, test_chain = generate_experiment(small_gen, small_spec)
    rows = evaluate_hierarchy(list(_models(train_chain).values()), test_chain)
    assert rows[0].f1 == 1.0
    assert rows[0].n_positive == 13


# ── 규칙 기준선 ──────────────────────────────────────────────────

def test_rule_baseline_scores():
    train = FeatureMatrix.from_array([[0.0, 1.0], [2.0, 1.0]])
    test = FeatureMatrix.from_array([[1.0, 1.0], [4.0, 1.0], [1.0, 2.0]])
    np.testing.assert_allclose(rule_baseline_scores(train, test), [0.0, 3.0, 1e12])


def test_evaluate_baseline_shape(small_gen, small_spec):
    train_chain, test_chain = generate_experiment(small_gen, small_spec)
    rows = evaluate_baseline(train_chain, test_chain)
    assert [r.level for r in rows] == list(small_spec.levels)
    assert all(0.0 <= r.f1 <= 1.0 for r in rows)


# ── 표 출력 ──────────────────────────────────────────────────────

def test_format_table_headers_and_rounding(small_gen, small_spec):
    train_chain, test_chain = generate_experiment(small_gen, small_spec)
    rows = evaluate_hierarchy(_models(train_chain), test_chain)
    text = format_table(rows, "table")
    header = text.splitlines()[0].split()
    assert header == ["Level", "Threshold", "Precision", "Recall", "F1"]
    assert "Interaction" in text and "1.00" in text
    csv_text = format_table(rows, "csv")
    assert csv_text.splitlines()[0] == "level,threshold,precision,recall,f1"
    assert len(csv_text.splitlines()) == 1 + len(rows)


def test_format_table_unknown_format():
    with pytest.raises(InvalidInput):
        format_table([], "html")
