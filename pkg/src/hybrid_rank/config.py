"""Declarative run configuration.

One JSON file drives the whole pipeline; command-line ``--set a.b=c``
overrides win over the file. Unknown keys anywhere are rejected up front so
typos fail before any stage runs. The run seed is the only seed: stage
seeds (split, train init, shuffle) are derived from it by name unless a
train.seed is given explicitly.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .boe import TrainConfig
from .corpus import CorpusFormat, TokenizerConfig
from .seeding import derive_seed

RANKERS = ("tfidf", "bm25", "lm", "boe", "fused")
SPLIT_NAMES = ("train", "dev", "test")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SplitSizes:
    train: int
    dev: int
    test: int

    def __post_init__(self) -> None:
        for name in SPLIT_NAMES:
            if getattr(self, name) < 0:
                raise ConfigError(f"splits.{name} must be >= 0")
        if self.train < 1:
            raise ConfigError("splits.train must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    corpus: str
    out_dir: str
    splits: SplitSizes
    seed: int = 0
    format: CorpusFormat = field(default_factory=CorpusFormat)
    tokenizer: TokenizerConfig = field(default_factory=TokenizerConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    min_query_len: int = 5
    ranker: str = "fused"
    eval_split: str = "test"
    pool_size: int | None = None
    tune_queries: int = 100
    threads: int = 1
    deterministic: bool = True

    def __post_init__(self) -> None:
        if self.ranker not in RANKERS:
            raise ConfigError(f"ranker must be one of {RANKERS}, got {self.ranker!r}")
        if self.eval_split not in SPLIT_NAMES:
            raise ConfigError(f"eval_split must be one of {SPLIT_NAMES}, got {self.eval_split!r}")
        if self.min_query_len < 1:
            raise ConfigError("min_query_len must be >= 1")
        if self.tune_queries < 1:
            raise ConfigError("tune_queries must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.pool_size is not None and self.pool_size < 1:
            raise ConfigError("pool_size must be >= 1 when set")


def _build(cls, obj: dict, where: str):
    """Construct a dataclass from a dict, rejecting unknown keys."""
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object, got {type(obj).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(obj) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**obj)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


_SECTIONS = {
    "splits": SplitSizes,
    "format": CorpusFormat,
    "tokenizer": TokenizerConfig,
    "train": TrainConfig,
}


def config_from_dict(obj: dict) -> RunConfig:
    merged = dict(obj)
    for key, cls in _SECTIONS.items():
        if key in merged:
            merged[key] = _build(cls, merged[key], key)
    if "splits" not in merged:
        raise ConfigError("missing required section: splits")
    for required in ("corpus", "out_dir"):
        if required not in merged:
            raise ConfigError(f"missing required key: {required}")
    return _build(RunConfig, merged, "config")


def parse_override(text: str) -> tuple[list[str], object]:
    """Parse one ``a.b.c=value``; values are JSON when possible, else strings."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    path = [p for p in key.strip().split(".") if p]
    if not path:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return path, value


def apply_overrides(obj: dict, overrides: list[str]) -> dict:
    out = json.loads(json.dumps(obj))  # deep copy, JSON types only
    for text in overrides:
        path, value = parse_override(text)
        node = out
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {text!r} descends into a non-object")
        node[path[-1]] = value
    return out


def load_config(path, overrides: list[str] = ()) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: top level must be an object")
    obj = apply_overrides(obj, list(overrides))
    train = obj.setdefault("train", {})
    if isinstance(train, dict) and "seed" not in train:
        train["seed"] = derive_seed(int(obj.get("seed", 0)), "train")
    return config_from_dict(obj)
