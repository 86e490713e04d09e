"""Generative recommender scaling study: python surface over the C++ core."""

from genrec._core import (
    ConfigError,
    DataError,
    ModelConfig,
    NumericError,
    backbone_flops_per_token,
    compare_fits,
    decay_weight,
    decode_flops_per_token,
    fit_log,
    fit_offset,
    param_count,
    rank_metrics,
    sample_negatives,
    total_flops_per_token,
    world_summary,
)

__all__ = [
    "ConfigError",
    "DataError",
    "ModelConfig",
    "NumericError",
    "backbone_flops_per_token",
    "compare_fits",
    "decay_weight",
    "decode_flops_per_token",
    "fit_log",
    "fit_offset",
    "param_count",
    "rank_metrics",
    "sample_negatives",
    "total_flops_per_token",
    "world_summary",
]
