"""Offline policy learning for contextual linear optimization with bandit feedback."""

from banditclo.polytope import GridInstance, PathMatrix, build_grid, enumerate_paths, linear_oracle, span_rank
from banditclo.features import FeatureSpec, LinearHypothesis, feature_map, predict
from banditclo.simulator import (
    BanditDataset,
    GroundTruth,
    LoggingKind,
    LoggingPolicy,
    build_logging_policy,
    generate_dataset,
    init_ground_truth,
)

__version__ = "0.1.0"

__all__ = [
    "BanditDataset",
    "FeatureSpec",
    "GridInstance",
    "GroundTruth",
    "LinearHypothesis",
    "LoggingKind",
    "LoggingPolicy",
    "PathMatrix",
    "build_grid",
    "build_logging_policy",
    "enumerate_paths",
    "feature_map",
    "generate_dataset",
    "init_ground_truth",
    "linear_oracle",
    "predict",
    "span_rank",
]
