"""Corpus ingestion, tokenization, query-article pair construction, and splits.

Pairs are built either by taking the first sentence of each record as the
query (news/encyclopedia style) or by using an explicit question field
(QA style). Everything downstream consumes tokenized ``Document`` objects.
"""

from __future__ import annotations

import json
import logging
import random
import re
from dataclasses import dataclass, field

from .artifacts import atomic_write_text, read_header_jsonl

log = logging.getLogger(__name__)

CORPUS_CACHE_FORMAT = "hybrid-rank/corpus-cache"
SPLIT_MANIFEST_FORMAT = "hybrid-rank/split-manifest"
FORMAT_VERSION = 1

# Maximal runs of unicode alphanumerics; underscores are separators.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

# First '.', '!' or '?' followed by whitespace or end of text.
_SENTENCE_END_RE = re.compile(r"[.!?](?:\s|$)")


class RecordRejected(Exception):
    """A raw record cannot become a query-article pair."""


class FormatError(Exception):
    """Too many malformed lines in a corpus file."""


class SizeError(Exception):
    """Requested split sizes exceed the number of available pairs."""


@dataclass(frozen=True)
class TokenizerConfig:
    lowercase: bool = True


@dataclass(frozen=True)
class CorpusFormat:
    """Field mapping for a JSONL corpus.

    style "first_sentence": records carry {id, title, body}; the query is the
    first sentence of the body. style "qa": records carry a question field
    used verbatim as the query and an article field as the body.
    """

    style: str = "first_sentence"
    id_field: str = "id"
    title_field: str = "title"
    body_field: str = "body"
    query_field: str = "question"
    article_field: str = "article"

    def __post_init__(self) -> None:
        if self.style not in ("first_sentence", "qa"):
            raise ValueError(f"unknown corpus style: {self.style!r}")


@dataclass(frozen=True)
class RawRecord:
    id: str
    title: str | None
    body: str
    query: str | None = None  # QA style only


@dataclass(frozen=True)
class Document:
    doc_id: int
    tokens: tuple[str, ...]
    source_id: str


@dataclass(frozen=True)
class QueryArticlePair:
    query: Document
    article: Document
    pair_id: int


@dataclass
class DatasetSplit:
    train: list[QueryArticlePair]
    dev: list[QueryArticlePair]
    test: list[QueryArticlePair]
    seed: int

    @property
    def sizes(self) -> tuple[int, int, int]:
        return (len(self.train), len(self.dev), len(self.test))


@dataclass
class PairBuildStats:
    accepted: int = 0
    rejected: int = 0
    reasons: dict[str, int] = field(default_factory=dict)

    def reject(self, reason: str) -> None:
        self.rejected += 1
        self.reasons[reason] = self.reasons.get(reason, 0) + 1


def tokenize(text: str, cfg: TokenizerConfig | None = None) -> list[str]:
    """Lowercase and split on maximal runs of non-alphanumeric characters.

    Pure-digit tokens are kept; empty input yields an empty list.
    """
    if cfg is None or cfg.lowercase:
        text = text.lower()
    return _TOKEN_RE.findall(text)


def split_first_sentence(
    record: RawRecord,
    min_query_tokens: int = 5,
    cfg: TokenizerConfig | None = None,
) -> tuple[str, str]:
    """Split a record body into (first sentence, remainder).

    Raises RecordRejected when the remainder is empty (single-sentence body)
    or the first sentence has fewer than ``min_query_tokens`` tokens.
    """
    m = _SENTENCE_END_RE.search(record.body)
    if m is None:
        raise RecordRejected(f"{record.id}: no sentence terminator, single-sentence body")
    query_text = record.body[: m.start() + 1]
    article_text = record.body[m.end() :].strip()
    if not article_text:
        raise RecordRejected(f"{record.id}: empty remainder after first sentence")
    if len(tokenize(query_text, cfg)) < min_query_tokens:
        raise RecordRejected(f"{record.id}: query shorter than {min_query_tokens} tokens")
    return query_text, article_text


def ingest(path, fmt: CorpusFormat) -> list[RawRecord]:
    """Parse a JSONL corpus into RawRecords.

    Malformed lines are skipped with a warning; more than 50% malformed
    raises FormatError. Missing ids are synthesized from the line number.
    """
    records: list[RawRecord] = []
    malformed = 0
    total = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            total += 1
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise ValueError("line is not a JSON object")
                records.append(_record_from_obj(obj, fmt, lineno))
            except (ValueError, KeyError) as exc:
                malformed += 1
                log.warning("%s line %d: skipping malformed record (%s)", path, lineno, exc)
    if total > 0 and malformed * 2 > total:
        raise FormatError(f"{path}: {malformed} of {total} lines malformed")
    return records


def _record_from_obj(obj: dict, fmt: CorpusFormat, lineno: int) -> RawRecord:
    rec_id = str(obj.get(fmt.id_field) or f"line-{lineno}")
    if fmt.style == "qa":
        query = obj[fmt.query_field]
        body = obj[fmt.article_field]
        if not isinstance(query, str) or not query:
            raise ValueError(f"missing field {fmt.query_field!r}")
        if not isinstance(body, str) or not body:
            raise ValueError(f"missing field {fmt.article_field!r}")
        return RawRecord(id=rec_id, title=None, body=body, query=query)
    body = obj[fmt.body_field]
    if not isinstance(body, str) or not body:
        raise ValueError(f"missing field {fmt.body_field!r}")
    title = obj.get(fmt.title_field)
    return RawRecord(id=rec_id, title=title if isinstance(title, str) else None, body=body)


def build_pairs(
    records: list[RawRecord],
    fmt: CorpusFormat,
    cfg: TokenizerConfig | None = None,
    min_query_len: int = 5,
    max_article_len: int | None = None,
) -> tuple[list[QueryArticlePair], PairBuildStats]:
    """Turn RawRecords into tokenized QueryArticlePairs.

    doc_ids and pair_ids are dense and assigned in input order over accepted
    records only. ``max_article_len`` truncates article token streams at build
    time; leave it None to keep full articles for indexing and evaluation
    (training applies its own truncation).
    """
    stats = PairBuildStats()
    pairs: list[QueryArticlePair] = []
    ids = set()
    for rec in records:
        if rec.id in ids:
            stats.reject("duplicate_id")
            continue
        if fmt.style == "qa":
            if rec.query is None:
                stats.reject("missing_question")
                continue
            query_text, article_text = rec.query, rec.body
        else:
            try:
                query_text, article_text = split_first_sentence(rec, min_query_len, cfg)
            except RecordRejected:
                stats.reject("sentence_split")
                continue
        q_tokens = tokenize(query_text, cfg)
        a_tokens = tokenize(article_text, cfg)
        if len(q_tokens) < min_query_len:
            stats.reject("query_too_short")
            continue
        if not a_tokens:
            stats.reject("empty_article")
            continue
        if max_article_len is not None:
            a_tokens = a_tokens[:max_article_len]
        ids.add(rec.id)
        pair_id = len(pairs)
        query = Document(doc_id=2 * pair_id, tokens=tuple(q_tokens), source_id=rec.id)
        article = Document(doc_id=2 * pair_id + 1, tokens=tuple(a_tokens), source_id=rec.id)
        pairs.append(QueryArticlePair(query=query, article=article, pair_id=pair_id))
        stats.accepted += 1
    return pairs, stats


def make_splits(
    pairs: list[QueryArticlePair],
    sizes: tuple[int, int, int],
    seed: int,
) -> DatasetSplit:
    """Shuffle pairs with the given seed and slice train/dev/test."""
    n_train, n_dev, n_test = sizes
    if n_train < 0 or n_dev < 0 or n_test < 0:
        raise SizeError(f"negative split size in {sizes}")
    if n_train + n_dev + n_test > len(pairs):
        raise SizeError(f"split sizes {sizes} exceed corpus of {len(pairs)} pairs")
    shuffled = list(pairs)
    random.Random(seed).shuffle(shuffled)
    return DatasetSplit(
        train=shuffled[:n_train],
        dev=shuffled[n_train : n_train + n_dev],
        test=shuffled[n_train + n_dev : n_train + n_dev + n_test],
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Persistence: tokenized-corpus cache and split manifest (JSONL with header)


def write_corpus_cache(path, pairs: list[QueryArticlePair]) -> None:
    lines = [
        json.dumps(
            {"format": CORPUS_CACHE_FORMAT, "version": FORMAT_VERSION, "n_pairs": len(pairs)},
            sort_keys=True,
        )
    ]
    for p in pairs:
        lines.append(
            json.dumps(
                {
                    "pair_id": p.pair_id,
                    "source_id": p.query.source_id,
                    "query_doc_id": p.query.doc_id,
                    "query_tokens": list(p.query.tokens),
                    "article_doc_id": p.article.doc_id,
                    "article_tokens": list(p.article.tokens),
                },
                sort_keys=True,
            )
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_corpus_cache(path) -> list[QueryArticlePair]:
    header, rows = read_header_jsonl(path, CORPUS_CACHE_FORMAT, FORMAT_VERSION)
    pairs = []
    for row in rows:
        query = Document(row["query_doc_id"], tuple(row["query_tokens"]), row["source_id"])
        article = Document(row["article_doc_id"], tuple(row["article_tokens"]), row["source_id"])
        pairs.append(QueryArticlePair(query=query, article=article, pair_id=row["pair_id"]))
    if len(pairs) != header["n_pairs"]:
        raise FormatError(f"{path}: header says {header['n_pairs']} pairs, found {len(pairs)}")
    return pairs


def write_split_manifest(path, split: DatasetSplit) -> None:
    lines = [
        json.dumps(
            {
                "format": SPLIT_MANIFEST_FORMAT,
                "version": FORMAT_VERSION,
                "seed": split.seed,
                "sizes": {"train": len(split.train), "dev": len(split.dev), "test": len(split.test)},
            },
            sort_keys=True,
        )
    ]
    for name, part in (("train", split.train), ("dev", split.dev), ("test", split.test)):
        for p in part:
            lines.append(json.dumps({"pair_id": p.pair_id, "split": name}, sort_keys=True))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_split_manifest(path, pairs: list[QueryArticlePair]) -> DatasetSplit:
    """Rebuild a DatasetSplit by joining a manifest against the pair list."""
    header, rows = read_header_jsonl(path, SPLIT_MANIFEST_FORMAT, FORMAT_VERSION)
    by_id = {p.pair_id: p for p in pairs}
    parts: dict[str, list[QueryArticlePair]] = {"train": [], "dev": [], "test": []}
    for row in rows:
        parts[row["split"]].append(by_id[row["pair_id"]])
    split = DatasetSplit(train=parts["train"], dev=parts["dev"], test=parts["test"], seed=header["seed"])
    if {k: len(v) for k, v in parts.items()} != header["sizes"]:
        raise FormatError(f"{path}: manifest sizes disagree with header")
    return split
