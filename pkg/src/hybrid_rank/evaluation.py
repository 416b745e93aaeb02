"""Ranking metrics (MRR, Precision@k) and baseline hyperparameter search.

Each query has exactly one relevant article. Its rank r_q counts every
strictly higher score plus every tied score whose doc id sorts earlier, so
tied blocks resolve by ascending doc id and the metrics stay deterministic.

    MRR = mean over queries of 1 / r_q
    P@k = fraction of queries with r_q <= k
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .artifacts import write_json
from .corpus import QueryArticlePair
from .fusion import ScoreMatrix
from .lexical import Bm25Params, DirichletParams, LexStats, bm25_scores_all, lm_dirichlet_scores_all

REPORT_FORMAT = "hybrid-rank/eval-report"
FORMAT_VERSION = 1

DEFAULT_KS = (1, 3, 10)

# grid ranges: k1 over 0.5..5.0 step 0.5, b over 0.3..0.9 step 0.1
K1_GRID = [i / 2 for i in range(1, 11)]
B_GRID = [i / 10 for i in range(3, 10)]
MU_GRID = [100, 200, 300, 400, 500, 1000, 1500, 2000, 2500, 3000]

TUNE_QUERIES = 100


class MissingGold(KeyError):
    """A ranked query has no gold article, or the gold article is not in the pool."""


@dataclass(frozen=True)
class RankOutcome:
    query_id: str
    rank: int


@dataclass(frozen=True)
class EvalReport:
    mrr: float
    p_at: dict[int, float]
    n_queries: int
    pool_size: int
    per_query: list[RankOutcome] = field(default_factory=list, repr=False)


def evaluate(scores: ScoreMatrix, gold: dict[str, str], ks=DEFAULT_KS) -> EvalReport:
    """Score every query of the matrix against its full document pool."""
    if not scores.query_ids:
        raise ValueError("cannot evaluate an empty score matrix")
    col = {d: j for j, d in enumerate(scores.doc_ids)}
    # position of each doc id in lexicographic label order, for tie-breaking
    lex = np.empty(len(scores.doc_ids), dtype=np.int64)
    for pos, j in enumerate(sorted(range(len(scores.doc_ids)), key=lambda j: scores.doc_ids[j])):
        lex[j] = pos
    outcomes = []
    for qi, q in enumerate(scores.query_ids):
        if q not in gold:
            raise MissingGold(f"query {q!r} has no gold article")
        g = gold[q]
        if g not in col:
            raise MissingGold(f"gold article {g!r} of query {q!r} is not in the pool")
        gj = col[g]
        row = scores.scores[qi]
        gold_score = row[gj]
        ties_before = int(((row == gold_score) & (lex < lex[gj])).sum())
        rank = 1 + int((row > gold_score).sum()) + ties_before
        outcomes.append(RankOutcome(q, rank))
    ranks = np.array([o.rank for o in outcomes], dtype=np.float64)
    return EvalReport(
        mrr=float((1.0 / ranks).mean()),
        p_at={k: float((ranks <= k).mean()) for k in ks},
        n_queries=len(outcomes),
        pool_size=len(scores.doc_ids),
        per_query=outcomes,
    )


def write_report(path, report: EvalReport) -> None:
    write_json(
        path,
        {
            "mrr": report.mrr,
            "p_at_1": report.p_at.get(1),
            "p_at_3": report.p_at.get(3),
            "p_at_10": report.p_at.get(10),
            "n_queries": report.n_queries,
            "pool_size": report.pool_size,
        },
        REPORT_FORMAT,
        FORMAT_VERSION,
    )


# ---------------------------------------------------------------------------
# Grid search for the lexical baselines


@dataclass(frozen=True)
class TuneResult:
    params: object  # Bm25Params or DirichletParams
    dev_mrr: float
    grid: list[dict]
    n_queries: int
    objective: str = "mrr"


def _pool_mrr(pairs: list[QueryArticlePair], stats: LexStats, score_all) -> float:
    """MRR of queries against the article pool; pool index i is pair i's
    article, ties go to the lower index (ids ascend with pair order)."""
    rr = 0.0
    for i, pair in enumerate(pairs):
        s = score_all(pair.query)
        g = s[i]
        rank = 1 + int((s > g).sum()) + int((s[:i] == g).sum())
        rr += 1.0 / rank
    return rr / len(pairs)


def tune_bm25(dev_pairs: list[QueryArticlePair], stats: LexStats,
              n_queries: int = TUNE_QUERIES) -> TuneResult:
    """Grid-search (k1, b) for dev MRR; ties keep the smaller (k1, b)."""
    if not dev_pairs:
        raise ValueError("cannot tune on an empty dev set")
    pairs = dev_pairs[:n_queries]
    best: tuple[float, Bm25Params] | None = None
    grid = []
    for k1 in K1_GRID:
        for b in B_GRID:
            params = Bm25Params(k1=k1, b=b)
            mrr = _pool_mrr(pairs, stats, lambda q: bm25_scores_all(q, stats, params))
            grid.append({"k1": k1, "b": b, "mrr": mrr})
            if best is None or mrr > best[0]:
                best = (mrr, params)
    return TuneResult(params=best[1], dev_mrr=best[0], grid=grid, n_queries=len(pairs))


def tune_mu(dev_pairs: list[QueryArticlePair], stats: LexStats,
            n_queries: int = TUNE_QUERIES) -> TuneResult:
    """Grid-search the Dirichlet pseudo-count; ties keep the smaller mu."""
    if not dev_pairs:
        raise ValueError("cannot tune on an empty dev set")
    pairs = dev_pairs[:n_queries]
    best: tuple[float, DirichletParams] | None = None
    grid = []
    for mu in MU_GRID:
        params = DirichletParams(mu=float(mu))
        mrr = _pool_mrr(pairs, stats, lambda q: lm_dirichlet_scores_all(q, stats, params))
        grid.append({"mu": mu, "mrr": mrr})
        if best is None or mrr > best[0]:
            best = (mrr, params)
    return TuneResult(params=best[1], dev_mrr=best[0], grid=grid, n_queries=len(pairs))
