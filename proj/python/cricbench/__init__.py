# SPDX-License-Identifier: Apache-2.0
"""Cricket-shot classification benchmark: python surface over the C++ core."""

from ._core import (  # noqa: F401
    CricbenchError,
    ManifestEntry,
    Model,
    Split,
    VideoManifest,
    all_arch_ids,
    build_manifest,
    build_model,
    builtin_pipeline_names,
    compute_metrics,
    default_class_names,
    evaluate,
    generate_synthetic,
    preprocess_file,
    required_pipeline,
    run_study,
    sample_indices,
    split_counts,
    stratified_split,
    train,
    write_report,
)

__all__ = [
    "CricbenchError",
    "ManifestEntry",
    "Model",
    "Split",
    "VideoManifest",
    "all_arch_ids",
    "build_manifest",
    "build_model",
    "builtin_pipeline_names",
    "compute_metrics",
    "default_class_names",
    "evaluate",
    "generate_synthetic",
    "preprocess_file",
    "required_pipeline",
    "run_study",
    "sample_indices",
    "split_counts",
    "stratified_split",
    "train",
    "write_report",
]
