"""Bag-of-embeddings dual encoder.

A text is encoded as the L2-normalized mean of its tokens' embedding rows;
query and article share one embedding table. Relevance is the dot product of
the two unit vectors, optionally squashed by a sigmoid. Training minimizes
the margin loss

    L = max(0, delta - s_p + s_n)

where s_p scores the query against its own article and s_n against an
in-batch negative. Gradients are analytic (through the mean, the
normalization, the dot, and the sigmoid when enabled) and applied with a
from-scratch Adam. Negative selection is treated as a constant during
differentiation: the choice itself gets no gradient, the chosen article does.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from collections import Counter
from dataclasses import asdict, dataclass, replace
from typing import Iterable, NamedTuple

import numpy as np

from .artifacts import atomic_write_text, read_binary_artifact, write_binary_artifact
from .corpus import DatasetSplit, QueryArticlePair
from .seeding import derive_seed

CHECKPOINT_FORMAT = "hybrid-rank/boe-checkpoint"
FORMAT_VERSION = 1

NEG_STRATEGIES = ("per-paper-min", "hardest-max", "random")
LOSS_SCORES = ("cosine", "sigmoid-cosine")


class NonFiniteGradient(RuntimeError):
    """A training sample produced a NaN or infinite gradient."""

    def __init__(self, pair_id: int, sample: "LossSample"):
        super().__init__(
            f"non-finite gradient on pair {pair_id} "
            f"(s_p={sample.s_p!r}, s_n={sample.s_n!r}, loss={sample.loss!r})"
        )
        self.pair_id = pair_id
        self.sample = sample


@dataclass(frozen=True)
class TrainConfig:
    delta: float = 0.5
    lr: float = 0.001
    dim: int = 768
    batch_size: int = 1000
    epochs: int = 50
    neg_strategy: str = "per-paper-min"
    loss_score: str = "cosine"
    seed: int = 0
    max_article_len: int = 1000
    min_freq: int = 2

    def __post_init__(self) -> None:
        if self.delta <= 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")
        if self.lr <= 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.max_article_len < 1:
            raise ValueError(f"max_article_len must be >= 1, got {self.max_article_len}")
        if self.min_freq < 1:
            raise ValueError(f"min_freq must be >= 1, got {self.min_freq}")
        if self.neg_strategy not in NEG_STRATEGIES:
            raise ValueError(f"neg_strategy must be one of {NEG_STRATEGIES}, got {self.neg_strategy!r}")
        if self.loss_score not in LOSS_SCORES:
            raise ValueError(f"loss_score must be one of {LOSS_SCORES}, got {self.loss_score!r}")


def config_hash(cfg: TrainConfig) -> str:
    blob = json.dumps(asdict(cfg), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class EmbeddingTable:
    vocab: dict[str, int]
    weights: np.ndarray  # |V| x dim, float64

    def __post_init__(self) -> None:
        if self.weights.ndim != 2 or self.weights.shape[0] != len(self.vocab):
            raise ValueError(
                f"weights shape {self.weights.shape} does not match vocab size {len(self.vocab)}"
            )
        if self.weights.shape[1] < 1:
            raise ValueError("embedding dim must be >= 1")

    @property
    def dim(self) -> int:
        return int(self.weights.shape[1])


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_table(cls, table: EmbeddingTable) -> "AdamState":
        return cls(m=np.zeros_like(table.weights), v=np.zeros_like(table.weights))


@dataclass(frozen=True)
class LossSample:
    s_p: float
    s_n: float
    loss: float


def build_vocab(pairs: Iterable[QueryArticlePair], min_freq: int = 2) -> dict[str, int]:
    """Token -> row id over query and article tokens with frequency >= min_freq."""
    counts: Counter[str] = Counter()
    for pair in pairs:
        counts.update(pair.query.tokens)
        counts.update(pair.article.tokens)
    kept = sorted(t for t, c in counts.items() if c >= min_freq)
    return {t: i for i, t in enumerate(kept)}


def init_table(vocab: dict[str, int], dim: int, seed: int) -> EmbeddingTable:
    """Fresh table with entries i.i.d. uniform in [-0.05, 0.05]."""
    if not vocab:
        raise ValueError("cannot initialize an embedding table over an empty vocabulary")
    rng = np.random.default_rng(seed)
    weights = rng.uniform(-0.05, 0.05, size=(len(vocab), dim)).astype(np.float64)
    return EmbeddingTable(vocab=dict(vocab), weights=weights)


class _Enc(NamedTuple):
    """Forward encoding plus what the backward pass needs."""

    v: np.ndarray      # unit vector, or zeros when degenerate
    scale: float       # 1 / ||pre-normalization mean||, 0.0 when degenerate
    rows: np.ndarray   # unique embedding rows used
    frac: np.ndarray   # occurrence fraction of each row in the token stream


def _encode_detail(tokens: Iterable[str], table: EmbeddingTable) -> _Enc:
    hits = [table.vocab[t] for t in tokens if t in table.vocab]
    dim = table.dim
    if not hits:
        empty = np.empty(0)
        return _Enc(np.zeros(dim), 0.0, empty.astype(np.int64), empty)
    counts = Counter(hits)
    rows = np.array(sorted(counts), dtype=np.int64)
    frac = np.array([counts[r] for r in rows.tolist()], dtype=np.float64) / len(hits)
    u = frac @ table.weights[rows]
    norm = float(np.linalg.norm(u))
    if norm == 0.0:
        return _Enc(np.zeros(dim), 0.0, rows, frac)
    return _Enc(u / norm, 1.0 / norm, rows, frac)


def encode(tokens: Iterable[str], table: EmbeddingTable) -> np.ndarray:
    """Unit-length mean embedding; the zero vector if nothing is in vocabulary."""
    return _encode_detail(tokens, table).v


def score_embed(v_q: np.ndarray, v_a: np.ndarray) -> float:
    if not v_q.any() or not v_a.any():
        return 0.0
    # unit inputs; clamp float residue so the value stays in [-1, 1]
    return float(np.clip(np.dot(v_q, v_a), -1.0, 1.0))


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def score_sigmoid(v_q: np.ndarray, v_a: np.ndarray) -> float:
    return float(_sigmoid(score_embed(v_q, v_a)))


def loss(s_p: float, s_n: float, delta: float) -> float:
    return max(0.0, delta - s_p + s_n)


def _pick_negative(row: np.ndarray, own: int, strategy: str, rng: random.Random | None) -> int:
    """Index of the negative article in a batch score row. Ties go to the
    ascending index via argmin/argmax first-hit semantics."""
    if strategy == "random":
        if rng is None:
            raise ValueError("random negative selection needs an rng")
        j = rng.randrange(len(row) - 1)
        return j if j < own else j + 1
    masked = row.astype(np.float64, copy=True)
    if strategy == "per-paper-min":
        masked[own] = np.inf
        return int(np.argmin(masked))
    if strategy == "hardest-max":
        masked[own] = -np.inf
        return int(np.argmax(masked))
    raise ValueError(f"unknown neg_strategy: {strategy!r}")


def select_negative(
    batch: list[QueryArticlePair],
    q_index: int,
    table: EmbeddingTable,
    cfg: TrainConfig,
    rng: random.Random | None = None,
) -> int:
    """Pick the in-batch negative article for the query of ``batch[q_index]``."""
    if len(batch) < 2:
        raise ValueError("in-batch negative selection needs a batch of >= 2 pairs")
    v_q = encode(batch[q_index].query.tokens, table)
    dots = np.array([np.dot(v_q, encode(p.article.tokens, table)) for p in batch])
    row = dots if cfg.loss_score == "cosine" else _sigmoid(dots)
    if cfg.neg_strategy == "random" and rng is None:
        rng = random.Random(derive_seed(cfg.seed, "negatives"))
    return _pick_negative(row, q_index, cfg.neg_strategy, rng)


def batch_gradients(
    batch: list[QueryArticlePair],
    table: EmbeddingTable,
    cfg: TrainConfig,
    rng: random.Random | None = None,
    neg_for: list[int] | None = None,
) -> tuple[dict[int, np.ndarray], list[LossSample], list[int]]:
    """Gradient of the summed hinge losses of a batch.

    Returns (row -> gradient, per-pair loss samples, chosen negative indices).
    ``neg_for`` pins the negatives, which is how the finite-difference check
    keeps the argmin/argmax choice fixed while perturbing weights.
    """
    encs_q = [_encode_detail(p.query.tokens, table) for p in batch]
    encs_a = [_encode_detail(p.article.tokens, table) for p in batch]
    dots = np.stack([e.v for e in encs_q]) @ np.stack([e.v for e in encs_a]).T
    scores = dots if cfg.loss_score == "cosine" else _sigmoid(dots)

    if neg_for is not None:
        neg = list(neg_for)
    else:
        neg = [_pick_negative(scores[i], i, cfg.neg_strategy, rng) for i in range(len(batch))]

    grads: dict[int, np.ndarray] = {}

    def scatter(enc: _Enc, du: np.ndarray, pair_id: int, sample: LossSample) -> None:
        if not np.isfinite(du).all():
            raise NonFiniteGradient(pair_id, sample)
        for r, f in zip(enc.rows.tolist(), enc.frac.tolist()):
            grads[r] = grads.get(r, 0.0) + f * du

    samples: list[LossSample] = []
    for i, pair in enumerate(batch):
        j = neg[i]
        s_p, s_n = float(scores[i, i]), float(scores[i, j])
        sample = LossSample(s_p, s_n, loss(s_p, s_n, cfg.delta))
        samples.append(sample)
        if not (math.isfinite(s_p) and math.isfinite(s_n)):
            # max(0.0, nan) is 0.0, so a bad score would otherwise slip by
            raise NonFiniteGradient(pair.pair_id, sample)
        if sample.loss <= 0.0:
            continue
        # d loss / d dot, folding in sigma'(dot) = s (1 - s) when squashed
        c_p, c_n = -1.0, 1.0
        if cfg.loss_score == "sigmoid-cosine":
            c_p *= s_p * (1.0 - s_p)
            c_n *= s_n * (1.0 - s_n)
        e_q, e_a, e_n = encs_q[i], encs_a[i], encs_a[j]
        # d(v_q . v_x)/du_q = (v_x - (v_q . v_x) v_q) / ||u_q||; a degenerate
        # side scores a constant 0, so it contributes no gradient
        if e_q.scale and e_a.scale:
            d_p = float(dots[i, i])
            scatter(e_q, c_p * (e_a.v - d_p * e_q.v) * e_q.scale, pair.pair_id, sample)
            scatter(e_a, c_p * (e_q.v - d_p * e_a.v) * e_a.scale, pair.pair_id, sample)
        if e_q.scale and e_n.scale:
            d_n = float(dots[i, j])
            scatter(e_q, c_n * (e_n.v - d_n * e_q.v) * e_q.scale, pair.pair_id, sample)
            scatter(e_n, c_n * (e_q.v - d_n * e_n.v) * e_n.scale, pair.pair_id, sample)

    return {r: g for r, g in grads.items() if np.any(g)}, samples, neg


def grad_step(
    batch: list[QueryArticlePair],
    table: EmbeddingTable,
    adam: AdamState,
    cfg: TrainConfig,
    rng: random.Random | None = None,
    neg_for: list[int] | None = None,
) -> tuple[EmbeddingTable, AdamState, float]:
    """One Adam step on a batch; mutates table and adam in place.

    Only rows with a nonzero gradient get moment and weight updates, so a
    zero-loss batch changes nothing but the step counter.
    """
    grads, samples, _ = batch_gradients(batch, table, cfg, rng=rng, neg_for=neg_for)
    adam.t += 1
    bc1 = 1.0 - adam.beta1 ** adam.t
    bc2 = 1.0 - adam.beta2 ** adam.t
    for r in sorted(grads):
        g = grads[r]
        adam.m[r] = adam.beta1 * adam.m[r] + (1.0 - adam.beta1) * g
        adam.v[r] = adam.beta2 * adam.v[r] + (1.0 - adam.beta2) * g * g
        m_hat = adam.m[r] / bc1
        v_hat = adam.v[r] / bc2
        table.weights[r] -= cfg.lr * m_hat / (np.sqrt(v_hat) + adam.eps)
    mean_loss = float(np.mean([s.loss for s in samples])) if samples else 0.0
    return table, adam, mean_loss


def _truncated(pair: QueryArticlePair, max_len: int) -> QueryArticlePair:
    if len(pair.article.tokens) <= max_len:
        return pair
    return replace(pair, article=replace(pair.article, tokens=pair.article.tokens[:max_len]))


def dev_mrr(pairs: list[QueryArticlePair], table: EmbeddingTable) -> float:
    """MRR of each query against the article pool of the same pairs.

    Ranks give earlier pairs the win on ties, mirroring the ascending-doc-id
    convention of the evaluation module.
    """
    if not pairs:
        return 0.0
    q = np.stack([encode(p.query.tokens, table) for p in pairs])
    a = np.stack([encode(p.article.tokens, table) for p in pairs])
    scores = q @ a.T
    rr = 0.0
    for i in range(len(pairs)):
        row = scores[i]
        gold = row[i]
        rank = 1 + int((row > gold).sum()) + int((row[:i] == gold).sum())
        rr += 1.0 / rank
    return rr / len(pairs)


def train(split: DatasetSplit, cfg: TrainConfig) -> tuple[EmbeddingTable, list[dict]]:
    """Train on split.train; log per-epoch mean loss and dev MRR.

    Returns the weights of the best dev-MRR epoch (earliest on ties), or the
    final weights when the dev split is empty. Articles are truncated to
    cfg.max_article_len for training only. A trailing 1-pair batch is skipped
    since it has no in-batch negative.
    """
    if not split.train:
        raise ValueError("train split is empty")
    vocab = build_vocab(split.train, min_freq=cfg.min_freq)
    if not vocab:
        raise ValueError(f"no token reaches frequency {cfg.min_freq}; vocabulary is empty")
    table = init_table(vocab, cfg.dim, derive_seed(cfg.seed, "init"))
    if cfg.epochs == 0:
        return table, []
    adam = AdamState.for_table(table)
    shuffle_rng = random.Random(derive_seed(cfg.seed, "shuffle"))
    neg_rng = random.Random(derive_seed(cfg.seed, "negatives"))
    pairs = [_truncated(p, cfg.max_article_len) for p in split.train]

    log: list[dict] = []
    best_mrr = -1.0
    best_weights: np.ndarray | None = None
    for epoch in range(1, cfg.epochs + 1):
        shuffle_rng.shuffle(pairs)
        loss_sum, n_samples = 0.0, 0
        for start in range(0, len(pairs), cfg.batch_size):
            chunk = pairs[start : start + cfg.batch_size]
            if len(chunk) < 2:
                continue
            table, adam, mean_loss = grad_step(chunk, table, adam, cfg, rng=neg_rng)
            loss_sum += mean_loss * len(chunk)
            n_samples += len(chunk)
        epoch_loss = loss_sum / n_samples if n_samples else 0.0
        mrr = dev_mrr(split.dev, table)
        log.append({"epoch": epoch, "mean_loss": epoch_loss, "dev_mrr": mrr})
        if split.dev and mrr > best_mrr:
            best_mrr = mrr
            best_weights = table.weights.copy()
    if best_weights is not None:
        table = EmbeddingTable(vocab=table.vocab, weights=best_weights)
    return table, log


# ---------------------------------------------------------------------------
# Persistence


def save_checkpoint(path, table: EmbeddingTable, cfg: TrainConfig) -> None:
    tokens = [t for t, _ in sorted(table.vocab.items(), key=lambda kv: kv[1])]
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": FORMAT_VERSION,
        "dim": table.dim,
        "n_vocab": len(tokens),
        "seed": cfg.seed,
        "config_hash": config_hash(cfg),
    }
    write_binary_artifact(path, header, tokens, [table.weights])


def load_checkpoint(path) -> EmbeddingTable:
    header, tokens, arrays = read_binary_artifact(
        path, CHECKPOINT_FORMAT, FORMAT_VERSION, lambda h: h["n_vocab"]
    )
    weights = arrays[0]
    if not np.isfinite(weights).all():
        raise ValueError(f"{path}: checkpoint contains non-finite weights")
    return EmbeddingTable(vocab={t: i for i, t in enumerate(tokens)}, weights=weights)


def write_train_log(path, log: list[dict]) -> None:
    atomic_write_text(path, "".join(json.dumps(entry, sort_keys=True) + "\n" for entry in log))


def read_train_log(path) -> list[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
