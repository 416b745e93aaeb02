"""Independent reference implementations used to check the package.

Everything here is written the slow, obvious way: explicit loops, dicts,
math.log. Nothing imports the production modules except for the plain data
containers they consume, so a bug has to appear in two unrelated
implementations to slip through.
"""

from __future__ import annotations

import math
from collections import Counter


# ---------------------------------------------------------------------------
# TF-IDF (sublinear tf, smoothed idf, L2-normalized; unigrams + bigrams)


def tfidf_terms(tokens, stopwords):
    kept = [t for t in tokens if t not in stopwords]
    return kept + [f"{a} {b}" for a, b in zip(kept, kept[1:])]


def tfidf_df(doc_tokens_list, stopwords):
    df = Counter()
    for tokens in doc_tokens_list:
        df.update(set(tfidf_terms(tokens, stopwords)))
    return dict(df)


def tfidf_vector(tokens, doc_tokens_list, stopwords):
    """L2-normalized dict term -> (1 + ln f) * (ln((1+n)/(1+df)) + 1)."""
    n = len(doc_tokens_list)
    df = tfidf_df(doc_tokens_list, stopwords)
    weights = {}
    for term, f in Counter(tfidf_terms(tokens, stopwords)).items():
        if term not in df:
            continue
        idf = math.log((1.0 + n) / (1.0 + df[term])) + 1.0
        weights[term] = (1.0 + math.log(f)) * idf
    norm = math.sqrt(sum(w * w for w in weights.values()))
    if norm == 0.0:
        return {}
    return {t: w / norm for t, w in weights.items()}


def dict_cosine(u: dict, v: dict) -> float:
    return sum(w * v[t] for t, w in u.items() if t in v)


# ---------------------------------------------------------------------------
# BM25 / Dirichlet LM (stopword-filtered unigrams)


def bm25(query_tokens, doc_tokens, doc_tokens_list, stopwords, k1, b):
    n = len(doc_tokens_list)
    kept_docs = [[t for t in toks if t not in stopwords] for toks in doc_tokens_list]
    kept_doc = [t for t in doc_tokens if t not in stopwords]
    avgdl = sum(len(d) for d in kept_docs) / n
    tf = Counter(kept_doc)
    score = 0.0
    for term in set(t for t in query_tokens if t not in stopwords):
        f = tf.get(term, 0)
        if f == 0:
            continue
        df = sum(1 for d in kept_docs if term in d)
        idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
        score += idf * f * (k1 + 1.0) / (f + k1 * (1.0 - b + b * len(kept_doc) / avgdl))
    return score


def lm_dirichlet(query_tokens, doc_tokens, doc_tokens_list, stopwords, mu):
    kept_docs = [[t for t in toks if t not in stopwords] for toks in doc_tokens_list]
    kept_doc = [t for t in doc_tokens if t not in stopwords]
    collection = Counter()
    for d in kept_docs:
        collection.update(d)
    c_len = sum(collection.values())
    tf = Counter(kept_doc)
    score = 0.0
    for term in (t for t in query_tokens if t not in stopwords):
        ctf = collection.get(term, 0)
        if ctf == 0:
            continue
        p_c = ctf / c_len
        score += math.log((tf.get(term, 0) + mu * p_c) / (len(kept_doc) + mu))
    return score


# ---------------------------------------------------------------------------
# Ranking metrics via explicit sort


def sorted_rank(doc_ids, row, gold_id):
    """Rank of gold_id when docs are ordered by descending score, ties by
    ascending doc id."""
    order = sorted(range(len(doc_ids)), key=lambda j: (-row[j], doc_ids[j]))
    return 1 + order.index(doc_ids.index(gold_id))


def eval_metrics(doc_ids, rows, gold_ids, ks=(1, 3, 10)):
    ranks = [sorted_rank(doc_ids, row, g) for row, g in zip(rows, gold_ids)]
    mrr = sum(1.0 / r for r in ranks) / len(ranks)
    p_at = {k: sum(1 for r in ranks if r <= k) / len(ranks) for k in ks}
    return ranks, mrr, p_at


# ---------------------------------------------------------------------------
# Bag-of-embeddings forward pass and finite differences


def boe_encode(tokens, vocab, weights):
    rows = [vocab[t] for t in tokens if t in vocab]
    if not rows:
        return [0.0] * len(weights[0])
    dim = len(weights[0])
    u = [sum(weights[r][c] for r in rows) / len(rows) for c in range(dim)]
    norm = math.sqrt(sum(x * x for x in u))
    if norm == 0.0:
        return [0.0] * dim
    return [x / norm for x in u]


def boe_score(v_q, v_a, mode):
    dot = sum(a * b for a, b in zip(v_q, v_a))
    if all(x == 0.0 for x in v_q) or all(x == 0.0 for x in v_a):
        dot = 0.0
    if mode == "sigmoid-cosine":
        return 1.0 / (1.0 + math.exp(-dot))
    return dot


def boe_batch_loss(batch_tokens, neg_indices, vocab, weights, delta, mode):
    """Summed hinge loss with the negative choice held fixed.

    batch_tokens: list of (query_tokens, article_tokens).
    """
    total = 0.0
    articles = [boe_encode(a, vocab, weights) for _, a in batch_tokens]
    for i, (q_tokens, _) in enumerate(batch_tokens):
        v_q = boe_encode(q_tokens, vocab, weights)
        s_p = boe_score(v_q, articles[i], mode)
        s_n = boe_score(v_q, articles[neg_indices[i]], mode)
        total += max(0.0, delta - s_p + s_n)
    return total


def fd_gradient(batch_tokens, neg_indices, vocab, weights, delta, mode, h=1e-5):
    """Central finite differences of boe_batch_loss over every weight."""
    grad = [[0.0] * len(row) for row in weights]
    for r in range(len(weights)):
        for c in range(len(weights[0])):
            orig = weights[r][c]
            weights[r][c] = orig + h
            up = boe_batch_loss(batch_tokens, neg_indices, vocab, weights, delta, mode)
            weights[r][c] = orig - h
            down = boe_batch_loss(batch_tokens, neg_indices, vocab, weights, delta, mode)
            weights[r][c] = orig
            grad[r][c] = (up - down) / (2.0 * h)
    return grad
