"""Pipeline driver: ingest -> fit -> train -> tune -> rank -> fuse -> evaluate.

Every stage reads one JSON config (plus ``--set`` overrides) and exchanges
data through versioned artifacts under the configured output directory, so
stages can rerun independently and byte-identically. Failures exit nonzero
with a one-line JSON error on stderr.
"""

from __future__ import annotations

import argparse
import functools
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import boe, corpus, evaluation, fusion, lexical, report, tfidf
from .artifacts import atomic_write_text
from .config import RANKERS, RunConfig, load_config
from .lexical import Bm25Params, DirichletParams
from .seeding import derive_seed
from .stopwords import english_stopwords, stopword_list_hash

CACHE_DIR_ENV = "HYBRID_RANK_CACHE_DIR"

TOPK_HEADER = "#query_id\trank\tdoc_id\tscore"
TOPK = 10


class MissingArtifact(FileNotFoundError):
    pass


def _q_label(pair_id: int) -> str:
    return f"q{pair_id:06d}"


def _d_label(pair_id: int) -> str:
    return f"d{pair_id:06d}"


class Paths:
    """Artifact locations for one run. The corpus cache can be redirected
    to a shared directory via HYBRID_RANK_CACHE_DIR."""

    def __init__(self, cfg: RunConfig):
        self.out = Path(cfg.out_dir)
        env = os.environ.get(CACHE_DIR_ENV)
        self.cache = Path(env) if env else self.out
        self.corpus_cache = self.cache / "corpus_cache.jsonl"
        self.split_manifest = self.cache / "split_manifest.jsonl"
        self.tfidf_model = self.out / "tfidf.model"
        self.tfidf_index = self.out / "tfidf.index"
        self.lexstats = self.out / "lexstats.json"
        self.lexstats_dev = self.out / "lexstats.dev.json"
        self.tuned_bm25 = self.out / "tuned.bm25.json"
        self.tuned_lm = self.out / "tuned.lm.json"
        self.checkpoint = self.out / "boe.ckpt"
        self.train_log = self.out / "train_log.jsonl"
        self.report_dir = self.out / "report"

    def scores(self, name: str) -> Path:
        return self.out / f"scores.{name}.tsv"

    def topk(self, name: str) -> Path:
        return self.out / f"topk.{name}.tsv"

    def eval_report(self, name: str) -> Path:
        return self.out / f"eval.{name}.json"


def _require(path: Path, produced_by: str) -> Path:
    if not path.exists():
        raise MissingArtifact(f"{path} not found; run `hybrid-rank {produced_by}` first")
    return path


def _load_split(cfg: RunConfig, paths: Paths) -> corpus.DatasetSplit:
    pairs = corpus.read_corpus_cache(_require(paths.corpus_cache, "ingest"))
    return corpus.read_split_manifest(_require(paths.split_manifest, "ingest"), pairs)


def _eval_pairs(cfg: RunConfig, split: corpus.DatasetSplit) -> list[corpus.QueryArticlePair]:
    pairs = getattr(split, cfg.eval_split)
    if cfg.pool_size is not None:
        pairs = pairs[: cfg.pool_size]
    if not pairs:
        raise ValueError(f"eval split {cfg.eval_split!r} is empty")
    return pairs


def _n_workers(cfg: RunConfig, args) -> int:
    threads = args.threads if args.threads else cfg.threads
    if args.deterministic or cfg.deterministic:
        return 1
    return threads


def _map_rows(fn, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))  # map keeps input order


# ---------------------------------------------------------------------------
# Score matrices per ranker


def _tfidf_matrix(paths: Paths, pairs, workers: int) -> fusion.ScoreMatrix:
    model = tfidf.load_model(_require(paths.tfidf_model, "fit"))
    vectors, labels = tfidf.load_index(_require(paths.tfidf_index, "fit"))
    want = [_d_label(p.pair_id) for p in pairs]
    if labels != want:
        raise ValueError("tfidf index does not cover the configured eval pool; re-run fit")
    index = tfidf.InvertedIndex(vectors)
    rows = _map_rows(lambda p: index.scores(tfidf.transform(p.query, model)), pairs, workers)
    return fusion.ScoreMatrix(
        [_q_label(p.pair_id) for p in pairs], labels, np.stack(rows), "tfidf"
    )


def _load_bm25_params(paths: Paths) -> Bm25Params:
    if paths.tuned_bm25.exists():
        obj = lexical.load_tuned_params(paths.tuned_bm25)
        return Bm25Params(**obj["params"])
    return Bm25Params()


def _load_lm_params(paths: Paths) -> DirichletParams:
    if paths.tuned_lm.exists():
        obj = lexical.load_tuned_params(paths.tuned_lm)
        return DirichletParams(**obj["params"])
    return DirichletParams()


def _lex_matrix(paths: Paths, pairs, workers: int, which: str) -> fusion.ScoreMatrix:
    stats = lexical.load_stats(_require(paths.lexstats, "fit"))
    if stats.n_docs != len(pairs):
        raise ValueError("lexical stats do not cover the configured eval pool; re-run fit")
    if which == "bm25":
        params = _load_bm25_params(paths)
        fn = lambda p: lexical.bm25_scores_all(p.query, stats, params)
    else:
        params = _load_lm_params(paths)
        fn = lambda p: lexical.lm_dirichlet_scores_all(p.query, stats, params)
    rows = _map_rows(fn, pairs, workers)
    return fusion.ScoreMatrix(
        [_q_label(p.pair_id) for p in pairs],
        [_d_label(p.pair_id) for p in pairs],
        np.stack(rows),
        which,
    )


def _boe_matrix(paths: Paths, pairs, workers: int) -> fusion.ScoreMatrix:
    table = boe.load_checkpoint(_require(paths.checkpoint, "train"))
    articles = np.stack(_map_rows(lambda p: boe.encode(p.article.tokens, table), pairs, workers))
    queries = np.stack(_map_rows(lambda p: boe.encode(p.query.tokens, table), pairs, workers))
    return fusion.ScoreMatrix(
        [_q_label(p.pair_id) for p in pairs],
        [_d_label(p.pair_id) for p in pairs],
        queries @ articles.T,
        "boe",
    )


def build_matrix(ranker: str, paths: Paths, pairs, workers: int) -> fusion.ScoreMatrix:
    if ranker == "tfidf":
        return _tfidf_matrix(paths, pairs, workers)
    if ranker in ("bm25", "lm"):
        return _lex_matrix(paths, pairs, workers, ranker)
    if ranker == "boe":
        return _boe_matrix(paths, pairs, workers)
    if ranker == "fused":
        return fusion.fuse(
            _tfidf_matrix(paths, pairs, workers), _boe_matrix(paths, pairs, workers)
        )
    raise ValueError(f"unknown ranker {ranker!r}")


def write_topk(path, m: fusion.ScoreMatrix, k: int = TOPK) -> None:
    lines = [TOPK_HEADER]
    for qi, q in enumerate(m.query_ids):
        row = m.scores[qi].tolist()
        order = sorted(range(len(m.doc_ids)), key=lambda j: (-row[j], m.doc_ids[j]))
        for rank_pos, j in enumerate(order[:k], start=1):
            lines.append(f"{q}\t{rank_pos}\t{m.doc_ids[j]}\t{row[j]!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def _gold_map(pairs) -> dict[str, str]:
    return {_q_label(p.pair_id): _d_label(p.pair_id) for p in pairs}


# ---------------------------------------------------------------------------
# Subcommands


def cmd_ingest(cfg: RunConfig, args) -> int:
    paths = Paths(cfg)
    paths.out.mkdir(parents=True, exist_ok=True)
    paths.cache.mkdir(parents=True, exist_ok=True)
    records = corpus.ingest(cfg.corpus, cfg.format)
    pairs, stats = corpus.build_pairs(records, cfg.format, cfg.tokenizer, cfg.min_query_len)
    sizes = (cfg.splits.train, cfg.splits.dev, cfg.splits.test)
    split = corpus.make_splits(pairs, sizes, derive_seed(cfg.seed, "split"))
    corpus.write_corpus_cache(paths.corpus_cache, pairs)
    corpus.write_split_manifest(paths.split_manifest, split)
    print(
        f"ingested {stats.accepted} pairs ({stats.rejected} rejected), "
        f"splits train/dev/test = {split.sizes}"
    )
    print(f"wrote {paths.corpus_cache}")
    print(f"wrote {paths.split_manifest}")
    return 0


def cmd_fit(cfg: RunConfig, args) -> int:
    paths = Paths(cfg)
    paths.out.mkdir(parents=True, exist_ok=True)
    split = _load_split(cfg, paths)
    pool = _eval_pairs(cfg, split)
    docs = [p.article for p in pool]
    labels = [_d_label(p.pair_id) for p in pool]
    sw, swh = english_stopwords(), stopword_list_hash()

    model = tfidf.fit(docs, sw, swh)
    tfidf.save_model(paths.tfidf_model, model)
    vectors = [tfidf.transform(d, model) for d in docs]
    tfidf.save_index(paths.tfidf_index, vectors, labels)
    print(f"wrote {paths.tfidf_model} ({model.vocab_size} terms over {model.n_docs} docs)")
    print(f"wrote {paths.tfidf_index}")

    lexical.save_stats(paths.lexstats, lexical.LexStats(docs, sw), swh)
    print(f"wrote {paths.lexstats}")
    if split.dev:
        dev_stats = lexical.LexStats([p.article for p in split.dev], sw)
        lexical.save_stats(paths.lexstats_dev, dev_stats, swh)
        print(f"wrote {paths.lexstats_dev}")
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    paths = Paths(cfg)
    paths.out.mkdir(parents=True, exist_ok=True)
    split = _load_split(cfg, paths)
    table, log = boe.train(split, cfg.train)
    boe.save_checkpoint(paths.checkpoint, table, cfg.train)
    boe.write_train_log(paths.train_log, log)
    if log:
        last = log[-1]
        best = max(log, key=lambda e: e["dev_mrr"])
        print(
            f"trained {len(log)} epochs: final loss {last['mean_loss']:.4f}, "
            f"best dev MRR {best['dev_mrr']:.4f} at epoch {best['epoch']}"
        )
    print(f"wrote {paths.checkpoint}")
    print(f"wrote {paths.train_log}")
    return 0


def cmd_tune(cfg: RunConfig, args) -> int:
    paths = Paths(cfg)
    paths.out.mkdir(parents=True, exist_ok=True)
    split = _load_split(cfg, paths)
    if not split.dev:
        raise ValueError("tuning needs a non-empty dev split")
    stats = lexical.load_stats(_require(paths.lexstats_dev, "fit"))
    n = cfg.tune_queries

    bm = evaluation.tune_bm25(split.dev, stats, n)
    lexical.save_tuned_params(
        paths.tuned_bm25, "bm25",
        {"k1": bm.params.k1, "b": bm.params.b},
        bm.dev_mrr, bm.grid, bm.objective, bm.n_queries,
    )
    print(f"bm25: k1={bm.params.k1}, b={bm.params.b} (dev MRR {bm.dev_mrr:.4f})")

    lm = evaluation.tune_mu(split.dev, stats, n)
    lexical.save_tuned_params(
        paths.tuned_lm, "lm",
        {"mu": lm.params.mu},
        lm.dev_mrr, lm.grid, lm.objective, lm.n_queries,
    )
    print(f"lm: mu={lm.params.mu} (dev MRR {lm.dev_mrr:.4f})")
    print(f"wrote {paths.tuned_bm25}")
    print(f"wrote {paths.tuned_lm}")
    return 0


def cmd_rank(cfg: RunConfig, args) -> int:
    paths = Paths(cfg)
    paths.out.mkdir(parents=True, exist_ok=True)
    split = _load_split(cfg, paths)
    pairs = _eval_pairs(cfg, split)
    ranker = args.ranker or cfg.ranker
    m = build_matrix(ranker, paths, pairs, _n_workers(cfg, args))
    fusion.export_scores(m, paths.scores(ranker))
    write_topk(paths.topk(ranker), m)
    print(f"ranked {len(m.query_ids)} queries over {len(m.doc_ids)} docs with {ranker}")
    print(f"wrote {paths.scores(ranker)}")
    print(f"wrote {paths.topk(ranker)}")
    return 0


def cmd_fuse(cfg: RunConfig, args) -> int:
    paths = Paths(cfg)
    paths.out.mkdir(parents=True, exist_ok=True)
    matrices = [fusion.import_scores(p) for p in args.matrices]
    fused = functools.reduce(lambda a, b: fusion.fuse(a, b, minmax=args.minmax), matrices)
    out = Path(args.out) if args.out else paths.scores("fused")
    fusion.export_scores(fused, out)
    print(f"fused {len(matrices)} matrices ({fused.source})")
    print(f"wrote {out}")
    return 0


def cmd_evaluate(cfg: RunConfig, args) -> int:
    paths = Paths(cfg)
    paths.out.mkdir(parents=True, exist_ok=True)
    split = _load_split(cfg, paths)
    pairs = _eval_pairs(cfg, split)
    if args.scores:
        name = Path(args.scores).stem
        matrix = fusion.import_scores(_require(Path(args.scores), "rank"))
    else:
        name = args.ranker or cfg.ranker
        matrix = fusion.import_scores(_require(paths.scores(name), "rank"))
    rep = evaluation.evaluate(matrix, _gold_map(pairs))
    evaluation.write_report(paths.eval_report(name), rep)
    if args.per_query:
        lines = ["#query_id\trank"] + [f"{o.query_id}\t{o.rank}" for o in rep.per_query]
        atomic_write_text(paths.out / f"eval.{name}.per_query.tsv", "\n".join(lines) + "\n")
    print(json.dumps(
        {
            "ranker": name,
            "mrr": rep.mrr,
            "p_at_1": rep.p_at.get(1),
            "p_at_3": rep.p_at.get(3),
            "p_at_10": rep.p_at.get(10),
            "n_queries": rep.n_queries,
            "pool_size": rep.pool_size,
        },
        sort_keys=True,
    ))
    return 0


def cmd_report(cfg: RunConfig, args) -> int:
    paths = Paths(cfg)
    split = _load_split(cfg, paths)
    pairs = _eval_pairs(cfg, split)
    workers = _n_workers(cfg, args)
    reports = {}
    for ranker in ("tfidf", "bm25", "lm", "boe", "fused"):
        m = build_matrix(ranker, paths, pairs, workers)
        reports[ranker] = evaluation.evaluate(m, _gold_map(pairs))
    log = boe.read_train_log(paths.train_log) if paths.train_log.exists() else []
    written = report.render(paths.report_dir, reports, log)
    for path in written:
        print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hybrid-rank",
        description="Lexical + bag-of-embeddings ranking pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument(
            "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
            help="override a config value (dotted keys, repeatable)",
        )
        p.add_argument("--threads", type=int, default=0, help="worker threads (0 = config value)")
        p.add_argument(
            "--deterministic", action="store_true",
            help="single-threaded ordered reductions regardless of --threads",
        )

    for name, fn, extra in (
        ("ingest", cmd_ingest, None),
        ("fit", cmd_fit, None),
        ("train", cmd_train, None),
        ("tune", cmd_tune, None),
        ("rank", cmd_rank, "rank"),
        ("fuse", cmd_fuse, "fuse"),
        ("evaluate", cmd_evaluate, "evaluate"),
        ("report", cmd_report, None),
    ):
        p = sub.add_parser(name)
        common(p)
        if extra == "rank":
            p.add_argument("--ranker", choices=RANKERS, default=None)
        elif extra == "fuse":
            p.add_argument("matrices", nargs="+", help="score TSVs to fuse (2 or more)")
            p.add_argument("--out", default=None)
            p.add_argument("--minmax", action="store_true",
                           help="min-max normalize each source per query before adding")
        elif extra == "evaluate":
            p.add_argument("--ranker", choices=RANKERS, default=None)
            p.add_argument("--scores", default=None, help="evaluate an explicit score TSV")
            p.add_argument("--per-query", action="store_true")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
        if args.command == "fuse" and len(args.matrices) < 2:
            raise ValueError("fuse needs at least two score matrices")
        return args.func(cfg, args)
    except Exception as exc:  # every failure is reported machine-readably
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
