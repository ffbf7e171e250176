"""Python bindings for the sense-decomposed Backpack LM core."""

from ._sensia import (
    Config,
    ConfigError,
    InvalidArgument,
    Model,
    ParseError,
    Vocab,
    cross_entropy,
    evaluate,
    filter_pairs,
    generate_synthetic,
    info_nce,
    override_mixture,
    procrustes,
    spearman,
    topology_rho,
    train,
    weights_at_progress,
)

__all__ = [
    "Config",
    "ConfigError",
    "InvalidArgument",
    "Model",
    "ParseError",
    "Vocab",
    "cross_entropy",
    "evaluate",
    "filter_pairs",
    "generate_synthetic",
    "info_nce",
    "override_mixture",
    "procrustes",
    "spearman",
    "topology_rho",
    "train",
    "weights_at_progress",
]
