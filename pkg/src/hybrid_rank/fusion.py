"""Additive score fusion and the TSV score-matrix interchange format.

Hybrid relevance is the plain elementwise sum s(q,a) = s_lex(q,a) +
s_embed(q,a); no rescaling happens by default since both sources already
live on comparable [-1, 1] / [0, 1] scales. A per-query min-max option
exists for external matrices on wilder scales.
"""

from __future__ import annotations

import numpy as np

from .artifacts import atomic_write_text

HEADER = "#query_id\tdoc_id\tscore"


class ShapeMismatch(ValueError):
    pass


class IdMismatch(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, path, line_no: int, reason: str):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.line_no = line_no


class ScoreMatrix:
    """Dense query x document score matrix with ordered string ids."""

    def __init__(self, query_ids: list[str], doc_ids: list[str], scores: np.ndarray, source: str):
        scores = np.asarray(scores, dtype=np.float64)
        if scores.shape != (len(query_ids), len(doc_ids)):
            raise ShapeMismatch(
                f"scores shape {scores.shape} does not match "
                f"{len(query_ids)} queries x {len(doc_ids)} docs"
            )
        if len(set(query_ids)) != len(query_ids):
            raise ValueError("duplicate query ids")
        if len(set(doc_ids)) != len(doc_ids):
            raise ValueError("duplicate doc ids")
        if scores.size and not np.isfinite(scores).all():
            raise ValueError(f"non-finite scores in matrix from source {source!r}")
        self.query_ids = list(query_ids)
        self.doc_ids = list(doc_ids)
        self.scores = scores
        self.source = source

    def __eq__(self, other) -> bool:
        if not isinstance(other, ScoreMatrix):
            return NotImplemented
        return (
            self.query_ids == other.query_ids
            and self.doc_ids == other.doc_ids
            and self.source == other.source
            and np.array_equal(self.scores, other.scores)
        )

    def __repr__(self) -> str:
        return (
            f"ScoreMatrix({len(self.query_ids)}x{len(self.doc_ids)}, source={self.source!r})"
        )


def minmax_rows(m: ScoreMatrix) -> ScoreMatrix:
    """Rescale each query row to [0, 1]; constant rows become all zeros."""
    scores = m.scores.copy()
    if scores.size:
        lo = scores.min(axis=1, keepdims=True)
        span = scores.max(axis=1, keepdims=True) - lo
        flat = (span == 0.0)[:, 0]
        span[flat] = 1.0
        scores = (scores - lo) / span
        scores[flat] = 0.0
    return ScoreMatrix(m.query_ids, m.doc_ids, scores, m.source)


def fuse(a: ScoreMatrix, b: ScoreMatrix, minmax: bool = False) -> ScoreMatrix:
    """Elementwise sum of two matrices over the same query and doc id sets.

    b is re-ordered to a's id order first, so row or column permutations
    between the sources do not matter.
    """
    if a.scores.shape != b.scores.shape:
        raise ShapeMismatch(f"cannot fuse {a.scores.shape} with {b.scores.shape}")
    for kind, ids_a, ids_b in (("query", a.query_ids, b.query_ids), ("doc", a.doc_ids, b.doc_ids)):
        odd = set(ids_a) ^ set(ids_b)
        if odd:
            raise IdMismatch(f"{kind} ids differ between sources: {sorted(odd)}")
    if minmax:
        a, b = minmax_rows(a), minmax_rows(b)
    q_pos = {q: i for i, q in enumerate(b.query_ids)}
    d_pos = {d: i for i, d in enumerate(b.doc_ids)}
    perm_q = [q_pos[q] for q in a.query_ids]
    perm_d = [d_pos[d] for d in a.doc_ids]
    aligned = b.scores[np.ix_(perm_q, perm_d)] if b.scores.size else b.scores
    return ScoreMatrix(
        a.query_ids, a.doc_ids, a.scores + aligned, f"{a.source}+{b.source}"
    )


def export_scores(m: ScoreMatrix, path) -> None:
    """Write every cell (zeros included) as TSV; repr() keeps floats exact."""
    lines = [HEADER, f"#source={m.source}"]
    for qi, q in enumerate(m.query_ids):
        row = m.scores[qi].tolist()
        for dj, d in enumerate(m.doc_ids):
            lines.append(f"{q}\t{d}\t{row[dj]!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def import_scores(path) -> ScoreMatrix:
    """Read a score TSV. Pairs absent from the file default to score 0;
    a pair listed twice keeps its last value."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        return ScoreMatrix([], [], np.zeros((0, 0)), "")
    if lines[0] != HEADER:
        raise ParseError(path, 1, f"expected header {HEADER!r}, got {lines[0]!r}")
    source = ""
    query_ids: list[str] = []
    doc_ids: list[str] = []
    q_pos: dict[str, int] = {}
    d_pos: dict[str, int] = {}
    cells: dict[tuple[int, int], float] = {}
    for line_no, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        if line.startswith("#"):
            if line.startswith("#source="):
                source = line[len("#source="):]
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError(path, line_no, f"expected 3 tab-separated fields, got {len(parts)}")
        q, d, raw = parts
        try:
            score = float(raw)
        except ValueError:
            raise ParseError(path, line_no, f"bad score {raw!r}") from None
        if not np.isfinite(score):
            raise ParseError(path, line_no, f"non-finite score {raw!r}")
        if q not in q_pos:
            q_pos[q] = len(query_ids)
            query_ids.append(q)
        if d not in d_pos:
            d_pos[d] = len(doc_ids)
            doc_ids.append(d)
        cells[(q_pos[q], d_pos[d])] = score
    scores = np.zeros((len(query_ids), len(doc_ids)))
    for (qi, dj), score in cells.items():
        scores[qi, dj] = score
    return ScoreMatrix(query_ids, doc_ids, scores, source)
