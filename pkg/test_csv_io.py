"""csv_io — 행렬/라벨/점수 CSV."""

import numpy as np
import pandas as pd
import pytest

from src.csv_io import (
    atomic_write_text,
    read_labels,
    read_matrix,
    read_scores,
    write_labels,
    write_matrix,
    write_scores,
)
from src.errors import InvalidInput, ParseError, StorageError
from src.linalg_core import FeatureMatrix


def test_matrix_values_survive_exactly(tmp_path, rng):
    x = FeatureMatrix.from_array(rng.standard_normal((5, 3)) / 7.0, col_names=["a", "b", "c"])
    path = write_matrix(x, tmp_path / "m.csv")
    back, stamps = read_matrix(path)
    assert stamps is None
    assert back.col_names == ("a", "b", "c")
    assert back.row_ids == x.row_ids
    np.testing.assert_array_equal(back.values, x.values)


def test_matrix_timestamp_column_is_not_a_feature(tmp_path):
    x = FeatureMatrix.from_array([[1.0, 2.0], [3.0, 4.0]])
    stamps = [pd.Timestamp("2024-01-01T00:00:00Z"), pd.Timestamp("2024-01-01T01:00:00Z")]
    back, read_stamps = read_matrix(write_matrix(x, tmp_path / "m.csv", timestamps=stamps))
    assert back.col_names == ("f0", "f1")
    assert list(read_stamps) == stamps


def test_matrix_non_numeric(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("row_id,a\nr0,1.0\nr1,oops\n", encoding="utf-8")
    with pytest.raises(ParseError):
        read_matrix(path)


def test_matrix_missing_value_reports_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("row_id,a,b\nr0,1.0,2.0\nr1,,2.0\n", encoding="utf-8")
    with pytest.raises(ParseError) as info:
        read_matrix(path)
    assert ":3" in str(info.value)


def test_matrix_duplicate_row_ids(tmp_path):
    path = tmp_path / "dup.csv"
    path.write_text("row_id,a\nr0,1.0\nr0,2.0\n", encoding="utf-8")
    with pytest.raises(InvalidInput):
        read_matrix(path)


def test_missing_and_empty_files(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_matrix(tmp_path / "none.csv")
    (tmp_path / "empty.csv").write_text("", encoding="utf-8")
    with pytest.raises(ParseError):
        read_matrix(tmp_path / "empty.csv")


def test_labels(tmp_path):
    path = write_labels(["a", "b", "c"], [True, False, True], tmp_path / "l.csv")
    ids, labels = read_labels(path)
    assert ids == ("a", "b", "c")
    assert labels.tolist() == [True, False, True]
    path.write_text("row_id,label\na,2\n", encoding="utf-8")
    with pytest.raises(ParseError):
        read_labels(path)


def test_scores(tmp_path):
    path = write_scores(["a", "b"], [0.1, 7.25], [False, True], tmp_path / "s.csv")
    assert path.read_text(encoding="utf-8").splitlines()[0] == "row_id,score,flagged"
    ids, scores, flagged = read_scores(path)
    assert ids == ("a", "b")
    assert scores.tolist() == [0.1, 7.25]
    assert flagged.tolist() == [False, True]


def test_atomic_write_leaves_no_temp(tmp_path):
    atomic_write_text(tmp_path / "out" / "f.txt", "hello\n")
    assert sorted(p.name for p in (tmp_path / "out").iterdir()) == ["f.txt"]


def test_atomic_write_failure(tmp_path):
    (tmp_path / "file").write_text("", encoding="utf-8")
    with pytest.raises(StorageError):
        atomic_write_text(tmp_path / "file" / "f.txt", "x")
