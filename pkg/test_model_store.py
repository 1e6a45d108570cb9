"""model_store — 번들 저장/로드, 무결성, 버전, 재현성."""

import json

import numpy as np
import pytest

from src.errors import IntegrityError, ParseError, StorageError, VersionError
from src.hrpca_model import FitConfig, fit, score
from src.model_store import BUNDLE_FORMAT_VERSION, bundle_timestamp, load_bundle, make_bundle, save_bundle
from src.synthgen import generate_experiment


@pytest.fixture
def bundle(rank2_model):
    return make_bundle([rank2_model], {"seed": 1234, "levels": ["interaction"]})


def test_round_trip_scores(bundle, rank2_model, low_rank_train, tmp_path):
    path = save_bundle(bundle, tmp_path / "bundle.json")
    loaded = load_bundle(path)
    assert loaded.level_names == ["interaction"]
    assert loaded.format_version == BUNDLE_FORMAT_VERSION
    assert loaded.fingerprint == {"seed": 1234, "levels": ["interaction"]}
    restored = loaded.level("interaction")
    np.testing.assert_allclose(score(restored, low_rank_train), score(rank2_model, low_rank_train), atol=1e-12)


def test_resave_is_byte_identical(bundle, tmp_path):
    first = save_bundle(bundle, tmp_path / "a.json")
    second = save_bundle(load_bundle(first), tmp_path / "b.json")
    assert first.read_bytes() == second.read_bytes()
    assert first.read_text(encoding="utf-8").endswith("\n")


def test_unknown_level(bundle):
    with pytest.raises(KeyError):
        bundle.level("account")


def test_tampered_model_rejected(bundle, tmp_path):
    path = save_bundle(bundle, tmp_path / "bundle.json")
    doc = json.loads(path.read_text(encoding="utf-8"))
    doc["models"][0]["threshold"] += 1.0
    path.write_text(json.dumps(doc), encoding="utf-8")
    with pytest.raises(IntegrityError):
        load_bundle(path)


def test_truncated_file(bundle, tmp_path):
    path = save_bundle(bundle, tmp_path / "bundle.json")
    path.write_text(path.read_text(encoding="utf-8")[:40], encoding="utf-8")
    with pytest.raises(ParseError) as info:
        load_bundle(path)
    assert str(path) in str(info.value)


def test_missing_model_field(bundle, tmp_path):
    path = save_bundle(bundle, tmp_path / "bundle.json")
    doc = json.loads(path.read_text(encoding="utf-8"))
    del doc["models"][0]["basis_u"]
    path.write_text(json.dumps(doc), encoding="utf-8")
    with pytest.raises(ParseError):
        load_bundle(path)


@pytest.mark.parametrize("version", [99, True, 1.0, "1", None])
def test_unsupported_format_version(bundle, tmp_path, version):
    path = save_bundle(bundle, tmp_path / "bundle.json")
    doc = json.loads(path.read_text(encoding="utf-8"))
    doc["format_version"] = version
    path.write_text(json.dumps(doc), encoding="utf-8")
    with pytest.raises(VersionError):
        load_bundle(path)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_bundle(tmp_path / "nope.json")


def test_unwritable_location(bundle, tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("x", encoding="utf-8")
    with pytest.raises(StorageError):
        save_bundle(bundle, blocker / "bundle.json")


def test_source_date_epoch(monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
    assert bundle_timestamp() == "1970-01-01T00:00:00Z"
    monkeypatch.delenv("SOURCE_DATE_EPOCH")
    assert bundle_timestamp().endswith("Z")


def test_multi_level_bundle_bytes_are_reproducible(small_gen, small_spec, tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    paths = []
    for name in ("a.json", "b.json"):
        train_chain, _ = generate_experiment(small_gen, small_spec)
        models = [fit(ds.matrix, FitConfig(rank=1), ds.level_name) for ds in train_chain]
        paths.append(save_bundle(make_bundle(models, {"seed": small_gen.seed}), tmp_path / name))
    assert paths[0].read_bytes() == paths[1].read_bytes()

    loaded = load_bundle(paths[0])
    assert loaded.level_names == list(small_spec.levels)
    assert loaded.created_at == "2023-11-14T22:13:20Z"
    resaved = save_bundle(loaded, tmp_path / "c.json")
    assert resaved.read_bytes() == paths[0].read_bytes()
