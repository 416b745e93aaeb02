import json

import numpy as np
import pytest

from hybrid_rank.artifacts import (
    ArtifactError,
    atomic_write_text,
    read_binary_artifact,
    read_header_jsonl,
    read_json,
    write_binary_artifact,
    write_json,
)


def test_json_round_trip(tmp_path):
    path = tmp_path / "x.json"
    write_json(path, {"a": 1, "b": [2, 3]}, "fmt/x", 1)
    obj = read_json(path, "fmt/x", 1)
    assert obj["a"] == 1 and obj["b"] == [2, 3]
    assert obj["format"] == "fmt/x" and obj["version"] == 1


def test_wrong_format_tag_rejected(tmp_path):
    path = tmp_path / "x.json"
    write_json(path, {}, "fmt/x", 1)
    with pytest.raises(ArtifactError):
        read_json(path, "fmt/y", 1)


def test_wrong_version_rejected(tmp_path):
    path = tmp_path / "x.json"
    write_json(path, {}, "fmt/x", 1)
    with pytest.raises(ArtifactError):
        read_json(path, "fmt/x", 2)


def test_jsonl_header_and_rows(tmp_path):
    path = tmp_path / "x.jsonl"
    lines = [json.dumps({"format": "fmt/l", "version": 1, "n": 2})]
    lines += [json.dumps({"i": i}) for i in range(2)]
    atomic_write_text(path, "\n".join(lines) + "\n")
    header, rows = read_header_jsonl(path, "fmt/l", 1)
    assert header["n"] == 2
    assert rows == [{"i": 0}, {"i": 1}]


def test_empty_jsonl_rejected(tmp_path):
    path = tmp_path / "e.jsonl"
    path.write_text("")
    with pytest.raises(ArtifactError):
        read_header_jsonl(path, "fmt/l", 1)


def test_binary_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    arrays = [rng.normal(size=(3, 4)), np.arange(5, dtype=np.int64)]
    path = tmp_path / "x.bin"
    write_binary_artifact(path, {"format": "fmt/b", "version": 1}, ["tok1", "tok2"], arrays)
    header, lines, back = read_binary_artifact(path, "fmt/b", 1, 2)
    assert lines == ["tok1", "tok2"]
    assert np.array_equal(back[0], arrays[0]) and back[0].dtype == arrays[0].dtype
    assert np.array_equal(back[1], arrays[1]) and back[1].dtype == np.int64


def test_binary_truncation_detected(tmp_path):
    path = tmp_path / "x.bin"
    write_binary_artifact(path, {"format": "fmt/b", "version": 1}, [], [np.ones(8)])
    data = path.read_bytes()
    path.write_bytes(data[:-4])
    with pytest.raises(ArtifactError):
        read_binary_artifact(path, "fmt/b", 1, 0)


def test_binary_writes_identical_bytes(tmp_path):
    a = np.linspace(0, 1, 7)
    p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
    for p in (p1, p2):
        write_binary_artifact(p, {"format": "fmt/b", "version": 1}, ["v"], [a])
    assert p1.read_bytes() == p2.read_bytes()


def test_atomic_write_replaces_existing(tmp_path):
    path = tmp_path / "t.txt"
    atomic_write_text(path, "old")
    atomic_write_text(path, "new")
    assert path.read_text() == "new"
    assert [p.name for p in tmp_path.iterdir()] == ["t.txt"]  # no temp litter
