"""Personalized answer generation: pipeline stages, config, and metrics."""

from ._page import (
    BigramLM,
    EmbeddingTable,
    RunConfig,
    bm25_scores,
    embedding_similarity,
    evaluate,
    fit_user_lm,
    generate,
    load_embeddings,
    parse_run_config,
    parse_run_config_text,
    prepare,
    retrieve,
    rouge_f1,
    serialize_run_config,
    tokenize,
    topics,
    train,
    user_perplexity,
    users_distinct,
    validate_run_config,
)

__all__ = [
    "BigramLM",
    "EmbeddingTable",
    "RunConfig",
    "bm25_scores",
    "embedding_similarity",
    "evaluate",
    "fit_user_lm",
    "generate",
    "load_embeddings",
    "parse_run_config",
    "parse_run_config_text",
    "prepare",
    "retrieve",
    "rouge_f1",
    "serialize_run_config",
    "tokenize",
    "topics",
    "train",
    "user_perplexity",
    "users_distinct",
    "validate_run_config",
]
