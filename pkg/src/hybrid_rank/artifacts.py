"""Deterministic on-disk artifact helpers.

Every artifact starts with a JSON header carrying a format tag and version.
Writes go through a temp file + rename so a crashed run never leaves a
half-written artifact behind, and identical inputs produce identical bytes.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np


class ArtifactError(Exception):
    """Bad or missing artifact header."""


def _atomic_write(path, data: bytes) -> None:
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    _atomic_write(path, text.encode("utf-8"))


def atomic_write_bytes(path, data: bytes) -> None:
    _atomic_write(path, data)


def write_json(path, obj, fmt: str, version: int) -> None:
    payload = {"format": fmt, "version": version}
    payload.update(obj)
    atomic_write_text(path, json.dumps(payload, sort_keys=True) + "\n")


def read_json(path, fmt: str, version: int) -> dict:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    check_header(obj, fmt, version, path)
    return obj


def check_header(header: dict, fmt: str, version: int, path) -> None:
    if header.get("format") != fmt:
        raise ArtifactError(f"{path}: expected format {fmt!r}, found {header.get('format')!r}")
    if header.get("version") != version:
        raise ArtifactError(f"{path}: unsupported version {header.get('version')!r}")


def read_header_jsonl(path, fmt: str, version: int) -> tuple[dict, list[dict]]:
    """Read a JSONL artifact whose first line is the header."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if not first:
            raise ArtifactError(f"{path}: empty artifact")
        header = json.loads(first)
        check_header(header, fmt, version, path)
        rows = [json.loads(line) for line in fh if line.strip()]
    return header, rows


# ---------------------------------------------------------------------------
# Mixed text/binary container: JSON header line, optional text block, then
# raw little-endian float64 payload. Used for embedding checkpoints and the
# sparse index, where byte-for-byte reproducibility matters.


def write_binary_artifact(path, header: dict, text_lines: list[str], arrays: list[np.ndarray]) -> None:
    head = dict(header)
    head["arrays"] = [{"dtype": str(a.dtype), "shape": list(a.shape)} for a in arrays]
    blob = bytearray()
    blob += (json.dumps(head, sort_keys=True) + "\n").encode("utf-8")
    for line in text_lines:
        blob += (line + "\n").encode("utf-8")
    for a in arrays:
        blob += np.ascontiguousarray(a).astype(a.dtype, copy=False).tobytes(order="C")
    atomic_write_bytes(path, bytes(blob))


def read_binary_artifact(path, fmt: str, version: int, n_text_lines) -> tuple[dict, list[str], list[np.ndarray]]:
    """Inverse of write_binary_artifact.

    ``n_text_lines`` is either an int or a callable mapping the header to the
    number of text lines that follow it.
    """
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        check_header(header, fmt, version, path)
        count = n_text_lines(header) if callable(n_text_lines) else n_text_lines
        lines = [fh.readline().decode("utf-8").rstrip("\n") for _ in range(count)]
        arrays = []
        for spec in header["arrays"]:
            dtype = np.dtype(spec["dtype"])
            shape = tuple(spec["shape"])
            n_bytes = dtype.itemsize * int(np.prod(shape)) if shape else dtype.itemsize
            buf = fh.read(n_bytes)
            if len(buf) != n_bytes:
                raise ArtifactError(f"{path}: truncated array payload")
            arrays.append(np.frombuffer(buf, dtype=dtype).reshape(shape).copy())
    return header, lines, arrays
