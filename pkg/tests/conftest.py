from __future__ import annotations

import random
from pathlib import Path

import pytest

from hybrid_rank.corpus import DatasetSplit, Document, QueryArticlePair
from hybrid_rank.stopwords import english_stopwords

REPO_ROOT = Path(__file__).resolve().parent.parent

# Five tiny documents exercising repeated terms, shared vocabulary, bigrams,
# and stopword removal. Tests treat these as already tokenized.
TOY_DOC_TOKENS = [
    ("the", "cat", "sat", "on", "the", "mat"),
    ("the", "dog", "sat", "on", "the", "log"),
    ("cats", "and", "dogs", "chase", "the", "ball"),
    ("the", "cat", "chased", "the", "ball", "into", "the", "garden"),
    ("a", "quiet", "garden", "near", "the", "river", "garden"),
]

TOY_QUERY_TOKENS = [
    ("the", "cat", "sat"),
    ("garden", "river", "pebble"),  # pebble is OOV everywhere
]


def mk_doc(tokens, doc_id: int = 0, source: str = "toy") -> Document:
    return Document(doc_id=doc_id, tokens=tuple(tokens), source_id=source)


def mk_pair(q_tokens, a_tokens, pair_id: int) -> QueryArticlePair:
    return QueryArticlePair(
        query=mk_doc(q_tokens, 2 * pair_id, f"p{pair_id}"),
        article=mk_doc(a_tokens, 2 * pair_id + 1, f"p{pair_id}"),
        pair_id=pair_id,
    )


@pytest.fixture(scope="session")
def stop() -> frozenset[str]:
    return english_stopwords()


@pytest.fixture()
def toy_docs() -> list[Document]:
    return [mk_doc(toks, doc_id=i, source=f"toy{i}") for i, toks in enumerate(TOY_DOC_TOKENS)]


@pytest.fixture()
def toy_queries() -> list[Document]:
    return [mk_doc(toks, doc_id=100 + i, source=f"q{i}") for i, toks in enumerate(TOY_QUERY_TOKENS)]


@pytest.fixture(scope="session")
def mini_corpus_path() -> Path:
    return REPO_ROOT / "data" / "mini_news.jsonl"


def signature_pairs(n_pairs: int = 200, n_background: int = 100, seed: int = 5) -> list[QueryArticlePair]:
    """Synthetic pairs where query i carries a private query-side signature and
    its article a different article-side one. No lexical overlap ties a query
    to its gold article, so an untrained table scores at chance and the
    association must be learned."""
    rng = random.Random(seed)
    background = [f"w{i:03d}" for i in range(n_background)]
    pairs = []
    for i in range(n_pairs):
        q = [f"qs{i:03d}"] * 2 + rng.choices(background, k=4)
        a = [f"as{i:03d}"] * 3 + rng.choices(background, k=12)
        rng.shuffle(q)
        rng.shuffle(a)
        pairs.append(mk_pair(q, a, i))
    return pairs


def overfit_split(n_pairs: int = 200, seed: int = 5) -> DatasetSplit:
    pairs = signature_pairs(n_pairs=n_pairs, seed=seed)
    return DatasetSplit(train=pairs, dev=pairs, test=[], seed=seed)


# The acceptance tests append their verdict lines here; the summary hook
# replays them after the run so they are visible even when capture is on.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
