"""Python bindings for the agcd core."""

from ._agcd import (  # noqa: F401
    AgcdError,
    ConfigError,
    DataError,
    FeatureDataset,
    accuracy_breakdown,
    cluster_accuracy,
    estimate_k,
    generate_synthetic,
    hungarian,
    load_feature_dir,
    mapping_diff,
    novelty_metrics,
    run,
    save_feature_dir,
)
