"""Python bindings for the hsrl recommendation lab."""

from ._core import (
    ConfigError,
    ContractError,
    DataError,
    DimensionError,
    Error,
    FormatError,
    LookupError,
    NumericError,
    TrainingError,
    __version__,
    clip_advantage,
    default_config,
    fit_codebook,
    generate_synthetic,
    resolve_config,
    reward_from_feedback,
    run,
    td_target,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "DataError",
    "DimensionError",
    "Error",
    "FormatError",
    "LookupError",
    "NumericError",
    "TrainingError",
    "__version__",
    "clip_advantage",
    "default_config",
    "fit_codebook",
    "generate_synthetic",
    "resolve_config",
    "reward_from_feedback",
    "run",
    "td_target",
]
