"""Visual word sense disambiguation: gloss matching, prompt retrieval and modality fusion."""

import json

from ._vwsd import (
    ConfigError,
    DataError,
    EmbeddingStore,
    Error,
    ImageIndex,
    ProviderError,
    SenseEntry,
    average_fuse,
    build_prompt,
    context_only_fuse,
    cosine_similarity,
    hit_at_1,
    l2_normalize,
    load_store,
    match_gloss,
    mrr,
    rank_candidates,
    run_cli,
    save_store,
    softmax,
    text_id,
)
from ._vwsd import _evaluate


def evaluate(config, **overrides):
    """Runs the pipeline for a config file; keyword arguments override config keys.

    Returns a dict with hit_at_1, mrr, scored, skipped_rows and per-sample traces.
    """
    result = _evaluate(str(config), {k: str(v) for k, v in overrides.items()})
    result["traces"] = [json.loads(t) for t in result["traces"]]
    return result


__all__ = [
    "ConfigError",
    "DataError",
    "EmbeddingStore",
    "Error",
    "ImageIndex",
    "ProviderError",
    "SenseEntry",
    "average_fuse",
    "build_prompt",
    "context_only_fuse",
    "cosine_similarity",
    "evaluate",
    "hit_at_1",
    "l2_normalize",
    "load_store",
    "match_gloss",
    "mrr",
    "rank_candidates",
    "run_cli",
    "save_store",
    "softmax",
    "text_id",
]
