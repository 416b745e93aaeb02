"""Deterministic sub-seed derivation.

Every source of randomness in the pipeline (splitting, table init, batch
shuffling, random negatives) draws from a sub-seed derived from the one
run-level seed, so each stage is reproducible on its own.
"""

from __future__ import annotations

import hashlib


def derive_seed(master: int, name: str) -> int:
    """Derive a named 32-bit sub-seed from the master seed."""
    digest = hashlib.sha256(f"{master}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")
