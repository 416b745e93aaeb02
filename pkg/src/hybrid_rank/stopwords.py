"""Bundled English stopword list (179 words), hash-pinned for artifacts."""

from __future__ import annotations

import hashlib
from importlib import resources

_CACHE: tuple[frozenset[str], str] | None = None


def _load() -> tuple[frozenset[str], str]:
    global _CACHE
    if _CACHE is None:
        data = resources.files("hybrid_rank.data").joinpath("stopwords_en.txt").read_bytes()
        words = frozenset(w for w in data.decode("utf-8").split("\n") if w)
        _CACHE = (words, hashlib.sha256(data).hexdigest())
    return _CACHE


def english_stopwords() -> frozenset[str]:
    return _load()[0]


def stopword_list_hash() -> str:
    """SHA-256 of the bundled list file; stored in model headers."""
    return _load()[1]
