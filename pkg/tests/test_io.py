import json

import numpy as np
import pytest

from maxray.io import (
    FixtureCache,
    RunManifest,
    canonical_json,
    read_csv,
    read_tensor,
    sha256_file,
    sha256_json,
    write_csv,
    write_json,
    write_tensor,
)

# --- 1. Tensors ---


@pytest.mark.parametrize(
    "array",
    [
        np.arange(12, dtype=float).reshape(3, 4),
        (np.arange(6) + 1j * np.arange(6)).reshape(2, 3),
        np.arange(5),
        np.array([True, False, True]),
    ],
    ids=["float", "complex", "int", "bool"],
)
def test_tensor_keeps_values_and_dtype(tmp_path, array):
    path = write_tensor(tmp_path / "a.mxt", array)
    loaded, axes = read_tensor(path)
    np.testing.assert_array_equal(loaded, array)
    assert loaded.shape == array.shape
    assert axes is None


def test_tensor_header_is_one_json_line(tmp_path):
    path = write_tensor(tmp_path / "a.mxt", np.zeros((2, 3)), ["k", "band"])
    header = json.loads(path.read_bytes().split(b"\n", 1)[0])
    assert header == {"dtype": "float64", "shape": [2, 3], "axes": ["k", "band"], "endian": "little"}
    assert path.stat().st_size == len(json.dumps(header, sort_keys=True)) + 1 + 6 * 8
    assert read_tensor(path)[1] == ["k", "band"]


def test_tensor_axis_count_must_match(tmp_path):
    with pytest.raises(ValueError):
        write_tensor(tmp_path / "a.mxt", np.zeros((2, 3)), ["k"])


def test_bad_tensor_header(tmp_path):
    path = tmp_path / "a.mxt"
    path.write_bytes(b'{"dtype": "float32", "shape": [1], "axes": null, "endian": "little"}\n\x00\x00\x00\x00')
    with pytest.raises(ValueError):
        read_tensor(path)


# --- 2. Tables and JSON ---


def test_csv_writes_exact_floats(tmp_path):
    path = write_csv(tmp_path / "t.csv", ["name", "x", "n"], [["a", 0.1, np.int64(3)], ["b", np.float64(1 / 3), 4]])
    header, rows = read_csv(path)
    assert header == ["name", "x", "n"]
    assert rows == [["a", "0.1", "3"], ["b", repr(1 / 3), "4"]]
    assert float(rows[1][1]) == 1 / 3


def test_canonical_json_is_sorted_and_compact():
    assert canonical_json({"b": 1, "a": [1.5, np.float64(2.0)]}) == '{"a":[1.5,2.0],"b":1}'
    assert canonical_json({"z": np.arange(2), "c": 1 + 2j}) == '{"c":[1.0,2.0],"z":[0,1]}'
    with pytest.raises(TypeError):
        canonical_json({"a": object()})


def test_json_hash_ignores_key_order():
    assert sha256_json({"a": 1, "b": [1, 2]}) == sha256_json({"b": [1, 2], "a": 1})
    assert sha256_json({"a": 1}) != sha256_json({"a": 2})


def test_write_json_is_readable(tmp_path):
    path = write_json(tmp_path / "r.json", {"value": np.float64(0.5), "flags": np.array([True])})
    assert json.loads(path.read_text()) == {"flags": [True], "value": 0.5}


# --- 3. Manifests ---


def test_manifest_records_and_verifies(tmp_path):
    manifest = RunManifest("bands", sha256_json({}), "0.1.0", inputs=["run.toml"])
    manifest.add(write_csv(tmp_path / "a.csv", ["x"], [[1.0]]))
    manifest.add(write_tensor(tmp_path / "b.mxt", np.ones(3)))
    manifest.gates["gap"] = True
    path = manifest.write(tmp_path)

    data = json.loads(path.read_text())
    assert data["subcommand"] == "bands"
    assert data["outputs"] == {"a.csv": sha256_file(tmp_path / "a.csv"), "b.mxt": sha256_file(tmp_path / "b.mxt")}
    assert data["gates"] == {"gap": True}
    assert data["wall_clock"] >= 0
    assert RunManifest.verify(tmp_path) == []


def test_manifest_detects_tampering(tmp_path):
    manifest = RunManifest("bands", "0" * 64, "0.1.0")
    manifest.add(write_csv(tmp_path / "a.csv", ["x"], [[1.0]]))
    manifest.add(write_csv(tmp_path / "b.csv", ["x"], [[2.0]]))
    manifest.write(tmp_path)

    (tmp_path / "a.csv").write_text("x\n1.5\n")
    (tmp_path / "b.csv").unlink()
    assert sorted(RunManifest.verify(tmp_path)) == ["a.csv", "b.csv"]


# --- 4. Fixture cache ---


def test_cache_disabled_without_root(monkeypatch):
    monkeypatch.delenv("MAXRAY_CACHE", raising=False)
    cache = FixtureCache()
    assert not cache.enabled
    cache.store("key", {"a": np.ones(2)})
    assert cache.load("key") is None


def test_cache_round_trip(tmp_path):
    cache = FixtureCache(tmp_path)
    assert cache.load("abc") is None
    arrays = {"values": np.linspace(0, 1, 4), "vectors": np.eye(2, dtype=complex), "npos": np.array([3, 4])}
    cache.store("abc", arrays)
    loaded = cache.load("abc")
    assert set(loaded) == set(arrays)
    for name, array in arrays.items():
        np.testing.assert_array_equal(loaded[name], array)


def test_cache_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("MAXRAY_CACHE", str(tmp_path / "cache"))
    cache = FixtureCache()
    assert cache.enabled
    cache.store("k", {"a": np.zeros(1)})
    assert (tmp_path / "cache" / "k" / "a.mxt").exists()


def test_cache_entry_missing_an_array_is_a_miss(tmp_path):
    cache = FixtureCache(tmp_path)
    cache.store("abc", {"values": np.ones(3), "vectors": np.eye(2)})
    assert not (tmp_path / "abc.tmp").exists()
    (tmp_path / "abc" / "vectors.mxt").unlink()
    assert cache.load("abc", ["values", "vectors"]) is None
    assert set(cache.load("abc")) == {"values"}
    cache.store("abc", {"values": np.zeros(3), "vectors": np.eye(2)})
    np.testing.assert_array_equal(cache.load("abc", ["values", "vectors"])["values"], np.zeros(3))
