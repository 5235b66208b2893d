"""Constrained joint estimation over randomized and observational data."""

from momentfuse._core import (
    ConfigError,
    DataError,
    Dataset,
    DimensionError,
    DivergenceError,
    GapConfig,
    IoError,
    ModelBundle,
    Split,
    StateError,
    SyntheticConfig,
    SyntheticDataset,
    TrainConfig,
    evaluate,
    feasibility_gap,
    gen_synthetic,
    joint_features,
    make_split,
    mape_deciles,
    mmd_joint,
    moment_estimate,
    mse,
    qini_area,
    read_dataset_csv,
    train,
    write_dataset_csv,
    write_synthetic_sidecar,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "Dataset",
    "DimensionError",
    "DivergenceError",
    "GapConfig",
    "IoError",
    "ModelBundle",
    "Split",
    "StateError",
    "SyntheticConfig",
    "SyntheticDataset",
    "TrainConfig",
    "evaluate",
    "feasibility_gap",
    "gen_synthetic",
    "joint_features",
    "make_split",
    "mape_deciles",
    "mmd_joint",
    "moment_estimate",
    "mse",
    "qini_area",
    "read_dataset_csv",
    "train",
    "write_dataset_csv",
    "write_synthetic_sidecar",
]
