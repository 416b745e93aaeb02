"""TF-IDF vectors over unigrams and bigrams, scored by cosine similarity.

Weights use sublinear term frequency and smoothed inverse document
frequency, natural log throughout:

    weight(t, d) = (1 + ln f_td) * (ln((1 + n) / (1 + df_t)) + 1)

and every vector is L2-normalized, so the score of two vectors is their dot
product. Stopwords are removed before bigram construction, so bigrams span
removed-word gaps.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .artifacts import atomic_write_text, check_header, read_binary_artifact, write_binary_artifact
from .corpus import Document

MODEL_FORMAT = "hybrid-rank/tfidf-model"
INDEX_FORMAT = "hybrid-rank/tfidf-index"
FORMAT_VERSION = 1


class EmptyCorpus(Exception):
    """fit() needs at least one document."""


@dataclass
class SparseVector:
    """term-id -> weight map with a cached L2 norm. Zero weights are never stored."""

    entries: dict[int, float]
    norm: float

    @classmethod
    def from_entries(cls, entries: dict[int, float]) -> SparseVector:
        entries = {t: w for t, w in entries.items() if w != 0.0}
        norm = math.sqrt(sum(w * w for w in entries.values()))
        return cls(entries=entries, norm=norm)

    def dot(self, other: SparseVector) -> float:
        a, b = self.entries, other.entries
        if len(b) < len(a):
            a, b = b, a
        return sum(w * b[t] for t, w in a.items() if t in b)

    def scaled(self, factor: float) -> SparseVector:
        return SparseVector.from_entries({t: w * factor for t, w in self.entries.items()})


@dataclass
class TfIdfModel:
    term_index: dict[str, int]
    df: np.ndarray  # per term-id document frequency
    n_docs: int
    stopwords: frozenset[str]
    stopword_hash: str = ""
    _idf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._idf = np.log((1.0 + self.n_docs) / (1.0 + self.df)) + 1.0

    def idf(self, term_id: int) -> float:
        return float(self._idf[term_id])

    @property
    def vocab_size(self) -> int:
        return len(self.term_index)


def _features(tokens, stopwords: frozenset[str]) -> list[str]:
    """Unigrams and bigrams of the stopword-filtered token stream."""
    kept = [t for t in tokens if t not in stopwords]
    feats = list(kept)
    feats.extend(f"{a} {b}" for a, b in zip(kept, kept[1:]))
    return feats


def fit(documents: list[Document], stopwords: frozenset[str] | set[str] = frozenset(),
        stopword_hash: str = "") -> TfIdfModel:
    """Build the term index and document-frequency table.

    Term ids are assigned in sorted term order so the model is independent of
    document order given the same document set.
    """
    if not documents:
        raise EmptyCorpus("cannot fit a TF-IDF model on an empty corpus")
    stopwords = frozenset(stopwords)
    df_counter: Counter[str] = Counter()
    for doc in documents:
        df_counter.update(set(_features(doc.tokens, stopwords)))
    terms = sorted(df_counter)
    term_index = {t: i for i, t in enumerate(terms)}
    df = np.array([df_counter[t] for t in terms], dtype=np.int64)
    return TfIdfModel(
        term_index=term_index,
        df=df,
        n_docs=len(documents),
        stopwords=stopwords,
        stopword_hash=stopword_hash,
    )


def transform(doc: Document, model: TfIdfModel) -> SparseVector:
    """Weight a document's in-vocabulary features and L2-normalize.

    An all-out-of-vocabulary document maps to the zero vector (norm 0).
    """
    counts: Counter[str] = Counter(_features(doc.tokens, model.stopwords))
    entries: dict[int, float] = {}
    for term, f in counts.items():
        tid = model.term_index.get(term)
        if tid is None:
            continue
        entries[tid] = (1.0 + math.log(f)) * model.idf(tid)
    vec = SparseVector.from_entries(entries)
    if vec.norm > 0.0:
        vec = vec.scaled(1.0 / vec.norm)
    return vec


def score(q: SparseVector, a: SparseVector) -> float:
    """Cosine of two transform() outputs; the zero vector scores 0."""
    return q.dot(a)


def rank(q: SparseVector, index: list[SparseVector], k: int) -> list[tuple[int, float]]:
    """Top-k (doc position, score), scores descending, ties by ascending position."""
    scores = [(i, q.dot(v)) for i, v in enumerate(index)]
    scores.sort(key=lambda item: (-item[1], item[0]))
    return scores[: max(k, 0)]


class InvertedIndex:
    """Postings over a fixed list of document vectors for batch ranking."""

    def __init__(self, vectors: list[SparseVector]):
        self.n_docs = len(vectors)
        postings: dict[int, list[tuple[int, float]]] = {}
        for i, vec in enumerate(vectors):
            for tid, w in vec.entries.items():
                postings.setdefault(tid, []).append((i, w))
        self._postings: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        for tid, plist in postings.items():
            idx = np.array([p[0] for p in plist], dtype=np.int64)
            w = np.array([p[1] for p in plist], dtype=np.float64)
            self._postings[tid] = (idx, w)

    def scores(self, q: SparseVector) -> np.ndarray:
        """Scores of the query against every indexed document."""
        out = np.zeros(self.n_docs, dtype=np.float64)
        for tid, qw in q.entries.items():
            hit = self._postings.get(tid)
            if hit is not None:
                idx, w = hit
                out[idx] += qw * w
        return out

    def rank(self, q: SparseVector, k: int) -> list[tuple[int, float]]:
        s = self.scores(q)
        order = np.argsort(-s, kind="stable")  # ties keep ascending position
        return [(int(i), float(s[i])) for i in order[: max(k, 0)]]


# ---------------------------------------------------------------------------
# Persistence


def save_model(path, model: TfIdfModel) -> None:
    """Header line (n_docs, stopword hash) + one `term TAB id TAB df` line per term."""
    header = {
        "format": MODEL_FORMAT,
        "version": FORMAT_VERSION,
        "n_docs": model.n_docs,
        "n_terms": model.vocab_size,
        "stopword_hash": model.stopword_hash,
        "stopwords": sorted(model.stopwords),
    }
    lines = [json.dumps(header, sort_keys=True)]
    terms = sorted(model.term_index, key=model.term_index.get)
    for term in terms:
        tid = model.term_index[term]
        lines.append(f"{term}\t{tid}\t{int(model.df[tid])}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_model(path) -> TfIdfModel:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        check_header(header, MODEL_FORMAT, FORMAT_VERSION, path)
        term_index: dict[str, int] = {}
        df = np.zeros(header["n_terms"], dtype=np.int64)
        for line in fh:
            if not line.strip():
                continue
            term, tid_s, df_s = line.rstrip("\n").split("\t")
            term_index[term] = int(tid_s)
            df[int(tid_s)] = int(df_s)
    return TfIdfModel(
        term_index=term_index,
        df=df,
        n_docs=header["n_docs"],
        stopwords=frozenset(header["stopwords"]),
        stopword_hash=header["stopword_hash"],
    )


def save_index(path, vectors: list[SparseVector], doc_labels: list[str]) -> None:
    """Compressed sparse rows: indptr / term-id / weight arrays plus row labels."""
    indptr = np.zeros(len(vectors) + 1, dtype=np.int64)
    tids: list[int] = []
    weights: list[float] = []
    for i, vec in enumerate(vectors):
        items = sorted(vec.entries.items())
        tids.extend(t for t, _ in items)
        weights.extend(w for _, w in items)
        indptr[i + 1] = len(tids)
    write_binary_artifact(
        path,
        {"format": INDEX_FORMAT, "version": FORMAT_VERSION, "n_docs": len(vectors)},
        doc_labels,
        [indptr, np.array(tids, dtype=np.int64), np.array(weights, dtype=np.float64)],
    )


def load_index(path) -> tuple[list[SparseVector], list[str]]:
    header, labels, arrays = read_binary_artifact(
        path, INDEX_FORMAT, FORMAT_VERSION, lambda h: h["n_docs"]
    )
    indptr, tids, weights = arrays
    vectors = []
    for i in range(header["n_docs"]):
        lo, hi = int(indptr[i]), int(indptr[i + 1])
        entries = {int(t): float(w) for t, w in zip(tids[lo:hi], weights[lo:hi])}
        vectors.append(SparseVector.from_entries(entries))
    return vectors, labels
