"""Hybrid first-stage retrieval: lexical ranking fused with a trainable
bag-of-embeddings dual encoder, plus evaluation tooling and a CLI."""

__version__ = "0.1.0"
