"""Okapi BM25 and Dirichlet-smoothed query-likelihood baselines.

Both scorers share one set of collection statistics (LexStats), built over
the same stopword-filtered unigram streams as the TF-IDF pipeline so the
baselines stay comparable.

BM25 per unique query term t, with the non-negative idf variant:

    idf+(t) = ln(1 + (n - df + 0.5) / (df + 0.5))
    contribution = idf+(t) * f * (k1 + 1) / (f + k1 * (1 - b + b * dl / avgdl))

Dirichlet LM per query-term occurrence (terms unseen in the collection are
skipped, since p(t|C) = 0 has no defined log):

    contribution = ln((f + mu * p(t|C)) / (dl + mu)),  p(t|C) = ctf(t) / |C|
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .artifacts import read_json, write_json
from .corpus import Document

STATS_FORMAT = "hybrid-rank/lex-stats"
PARAMS_FORMAT = "hybrid-rank/tuned-params"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.5
    b: float = 0.75

    def __post_init__(self) -> None:
        if self.k1 <= 0:
            raise ValueError(f"k1 must be > 0, got {self.k1}")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError(f"b must be in [0, 1], got {self.b}")


@dataclass(frozen=True)
class DirichletParams:
    mu: float = 1000.0

    def __post_init__(self) -> None:
        if self.mu <= 0:
            raise ValueError(f"mu must be > 0, got {self.mu}")


class LexStats:
    """Sufficient statistics over a document collection for both baselines."""

    def __init__(self, documents: list[Document], stopwords: frozenset[str] | set[str] = frozenset()):
        self.stopwords = frozenset(stopwords)
        self.doc_tf: list[Counter[str]] = []
        doc_len = []
        collection_tf: Counter[str] = Counter()
        df: Counter[str] = Counter()
        for doc in documents:
            kept = [t for t in doc.tokens if t not in self.stopwords]
            tf = Counter(kept)
            self.doc_tf.append(tf)
            doc_len.append(len(kept))
            collection_tf.update(tf)
            df.update(tf.keys())
        self.doc_len = np.array(doc_len, dtype=np.int64)
        self.n_docs = len(documents)
        self.collection_len = int(self.doc_len.sum())
        self.avg_doc_len = self.collection_len / self.n_docs if self.n_docs else 0.0
        self.collection_tf = dict(collection_tf)
        self.df = dict(df)
        # term -> (doc indices, term frequencies) for vectorized ranking
        self._postings: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        plists: dict[str, list[tuple[int, int]]] = {}
        for i, tf in enumerate(self.doc_tf):
            for term, f in tf.items():
                plists.setdefault(term, []).append((i, f))
        for term, plist in plists.items():
            self._postings[term] = (
                np.array([p[0] for p in plist], dtype=np.int64),
                np.array([p[1] for p in plist], dtype=np.float64),
            )

    def query_terms(self, q: Document) -> list[str]:
        return [t for t in q.tokens if t not in self.stopwords]

    def idf_plus(self, term: str) -> float:
        df = self.df.get(term, 0)
        return math.log(1.0 + (self.n_docs - df + 0.5) / (df + 0.5))

    def p_collection(self, term: str) -> float:
        return self.collection_tf.get(term, 0) / self.collection_len


def bm25_score(q: Document, a_id: int, stats: LexStats, p: Bm25Params) -> float:
    """BM25 score of document ``a_id`` for query ``q``."""
    tf = stats.doc_tf[a_id]
    dl = float(stats.doc_len[a_id])
    norm = p.k1 * (1.0 - p.b + p.b * dl / stats.avg_doc_len)
    score = 0.0
    for term in set(stats.query_terms(q)):
        f = tf.get(term, 0)
        if f == 0:
            continue
        score += stats.idf_plus(term) * f * (p.k1 + 1.0) / (f + norm)
    return score


def lm_dirichlet_score(q: Document, a_id: int, stats: LexStats, p: DirichletParams) -> float:
    """Dirichlet-smoothed log query likelihood of document ``a_id``."""
    tf = stats.doc_tf[a_id]
    dl = float(stats.doc_len[a_id])
    score = 0.0
    for term in stats.query_terms(q):
        ptc = stats.p_collection(term)
        if ptc == 0.0:
            continue
        score += math.log((tf.get(term, 0) + p.mu * ptc) / (dl + p.mu))
    return score


def bm25_scores_all(q: Document, stats: LexStats, p: Bm25Params) -> np.ndarray:
    """BM25 of the query against every document, via postings."""
    out = np.zeros(stats.n_docs, dtype=np.float64)
    norm = p.k1 * (1.0 - p.b + p.b * stats.doc_len / stats.avg_doc_len)
    for term in set(stats.query_terms(q)):
        hit = stats._postings.get(term)
        if hit is None:
            continue
        idx, f = hit
        out[idx] += stats.idf_plus(term) * f * (p.k1 + 1.0) / (f + norm[idx])
    return out


def lm_dirichlet_scores_all(q: Document, stats: LexStats, p: DirichletParams) -> np.ndarray:
    """Dirichlet LM of the query against every document, via postings.

    Computed as a per-document baseline (every term smoothed from the
    collection) plus posting corrections where the term actually occurs.
    """
    counts = Counter(t for t in stats.query_terms(q) if stats.p_collection(t) > 0.0)
    n_kept = sum(counts.values())
    log_dl_mu = np.log(stats.doc_len + p.mu)
    out = -float(n_kept) * log_dl_mu
    base = 0.0
    for term, c in counts.items():
        mup = p.mu * stats.p_collection(term)
        base += c * math.log(mup)
        hit = stats._postings.get(term)
        if hit is not None:
            idx, f = hit
            out[idx] += c * (np.log(f + mup) - math.log(mup))
    return out + base


# ---------------------------------------------------------------------------
# Persistence


def save_stats(path, stats: LexStats, stopword_hash: str = "") -> None:
    write_json(
        path,
        {
            "n_docs": stats.n_docs,
            "doc_len": stats.doc_len.tolist(),
            "collection_len": stats.collection_len,
            "collection_tf": stats.collection_tf,
            "df": stats.df,
            "doc_tf": [dict(tf) for tf in stats.doc_tf],
            "stopwords": sorted(stats.stopwords),
            "stopword_hash": stopword_hash,
        },
        STATS_FORMAT,
        FORMAT_VERSION,
    )


def load_stats(path) -> LexStats:
    obj = read_json(path, STATS_FORMAT, FORMAT_VERSION)
    stats = LexStats.__new__(LexStats)
    stats.stopwords = frozenset(obj["stopwords"])
    stats.doc_tf = [Counter(tf) for tf in obj["doc_tf"]]
    stats.doc_len = np.array(obj["doc_len"], dtype=np.int64)
    stats.n_docs = obj["n_docs"]
    stats.collection_len = obj["collection_len"]
    stats.avg_doc_len = stats.collection_len / stats.n_docs if stats.n_docs else 0.0
    stats.collection_tf = {t: int(c) for t, c in obj["collection_tf"].items()}
    stats.df = {t: int(c) for t, c in obj["df"].items()}
    stats._postings = {}
    plists: dict[str, list[tuple[int, int]]] = {}
    for i, tf in enumerate(stats.doc_tf):
        for term, f in tf.items():
            plists.setdefault(term, []).append((i, f))
    for term, plist in plists.items():
        stats._postings[term] = (
            np.array([p[0] for p in plist], dtype=np.int64),
            np.array([p[1] for p in plist], dtype=np.float64),
        )
    return stats


def save_tuned_params(path, model: str, params: dict, dev_mrr: float, grid: list[dict],
                      objective: str = "mrr", n_queries: int = 0) -> None:
    write_json(
        path,
        {
            "model": model,
            "params": params,
            "dev_mrr": dev_mrr,
            "objective": objective,
            "n_queries": n_queries,
            "grid": grid,
        },
        PARAMS_FORMAT,
        FORMAT_VERSION,
    )


def load_tuned_params(path) -> dict:
    return read_json(path, PARAMS_FORMAT, FORMAT_VERSION)
