"""Word-embedding debiasing: linear baseline and DeepSoftDebias residual nets.

Thin python surface over the C++ core. The main entry points:

    load_embeddings / save_embeddings / normalize_rows
    load_bias_spec / build_subspace / projection_energy / direct_bias
    debias(set, spec, method="dsd" | "baseline", ...)
    mac / mac_significance / stereotype_score / crows_score
    train_eval / downstream_delta
    default_hypers(dim)
    run_cli([...])
"""

from ._core import (  # noqa: F401
    BiasSpec,
    BiasSubspace,
    DsdError,
    EmbeddingSet,
    build_subspace,
    cosine,
    crows_score,
    debias,
    default_hypers,
    direct_bias,
    downstream_delta,
    load_bias_spec,
    load_embeddings,
    mac,
    mac_significance,
    neutral_indices,
    normalize_rows,
    projection_energy,
    run_cli,
    save_embeddings,
    sentence_vector,
    stereotype_score,
    tokenize,
    train_eval,
)

__version__ = "0.1.0"
