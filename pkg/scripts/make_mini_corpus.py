#!/usr/bin/env python3
"""Generate the bundled mini news corpus (data/mini_news.jsonl).

Synthetic but news-shaped: every record has a title, a first sentence that
names the story's entities, and a body that keeps mentioning them among
topic vocabulary and ordinary function words. A small number of records are
deliberately malformed (no sentence terminator, or a too-short opening
sentence) so ingestion rejection paths stay exercised.

The output is deterministic for a given seed; the committed fixture was
produced with the defaults below.
"""

from __future__ import annotations

import argparse
import json
import random
from pathlib import Path

CONSONANTS = "bcdfglmnprstvz"
VOWELS = "aeiou"

FUNCTION_WORDS = (
    "the of a in to for on with as at by from that is was were this it "
    "after before over under between against during their its his her"
).split()

TOPICS = (
    "markets", "football", "elections", "storms", "cinema",
    "science", "railways", "courts",
)

N_GOOD = 1000
N_BAD = 20


def word(rng: random.Random, syllables: int) -> str:
    return "".join(
        rng.choice(CONSONANTS) + rng.choice(VOWELS) for _ in range(syllables)
    )


def zipf_choice(rng: random.Random, items: list[str]) -> str:
    # rank-weighted pick: P(i) ~ 1/(i+1)
    weights = [1.0 / (i + 1) for i in range(len(items))]
    return rng.choices(items, weights=weights, k=1)[0]


def make_topic_vocab(rng: random.Random) -> dict[str, list[str]]:
    vocab = {}
    for topic in TOPICS:
        vocab[topic] = [word(rng, rng.randint(2, 3)) for _ in range(60)]
    return vocab


def sentence(rng: random.Random, topic_words: list[str], entities: list[str],
             n_words: int, mention_p: float) -> str:
    out = []
    for _ in range(n_words):
        roll = rng.random()
        if roll < mention_p and entities:
            out.append(rng.choice(entities))
        elif roll < mention_p + 0.35:
            out.append(rng.choice(FUNCTION_WORDS))
        else:
            out.append(zipf_choice(rng, topic_words))
    text = " ".join(out)
    return text[0].upper() + text[1:] + "."


def good_record(rng: random.Random, idx: int, vocab: dict[str, list[str]]) -> dict:
    topic = rng.choice(TOPICS)
    words = vocab[topic]
    entities = [word(rng, rng.randint(3, 4)) for _ in range(rng.randint(2, 3))]
    lead_len = rng.randint(8, 14)
    lead = sentence(rng, words, entities, lead_len, mention_p=0.3)
    body_sentences = [lead]
    for _ in range(rng.randint(3, 7)):
        body_sentences.append(
            sentence(rng, words, entities, rng.randint(8, 16), mention_p=0.12)
        )
    title = " ".join(zipf_choice(rng, words) for _ in range(rng.randint(2, 4))).title()
    return {
        "id": f"news-{idx:04d}",
        "title": title,
        "body": " ".join(body_sentences),
    }


def bad_record(rng: random.Random, idx: int, vocab: dict[str, list[str]]) -> dict:
    topic = rng.choice(TOPICS)
    words = vocab[topic]
    if rng.random() < 0.5:
        # no sentence terminator anywhere
        body = " ".join(zipf_choice(rng, words) for _ in range(rng.randint(10, 20)))
    else:
        # opening sentence too short to be a query
        tail = sentence(rng, words, [], rng.randint(8, 12), mention_p=0.0)
        body = f"{zipf_choice(rng, words).capitalize()} {rng.choice(words)}. {tail}"
    return {"id": f"news-{idx:04d}", "title": zipf_choice(rng, words).title(), "body": body}


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=20240611)
    parser.add_argument("--good", type=int, default=N_GOOD)
    parser.add_argument("--bad", type=int, default=N_BAD)
    parser.add_argument(
        "--out", default=str(Path(__file__).resolve().parent.parent / "data" / "mini_news.jsonl")
    )
    args = parser.parse_args()

    rng = random.Random(args.seed)
    vocab = make_topic_vocab(rng)
    total = args.good + args.bad
    bad_at = set(rng.sample(range(total), args.bad))
    lines = []
    for idx in range(total):
        rec = bad_record(rng, idx, vocab) if idx in bad_at else good_record(rng, idx, vocab)
        lines.append(json.dumps(rec, sort_keys=True))

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {out} ({args.good} good + {args.bad} malformed records)")


if __name__ == "__main__":
    main()
