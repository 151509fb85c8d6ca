"""Mixture of weak encoders: a small multi-task audio-style LLM trainer.

Configs and reports are plain dicts; arrays are float64 NumPy arrays.
"""

from ._mowe import (
    ArgumentError,
    ConfigError,
    Dataset,
    DimensionError,
    FormatError,
    IndexError,
    Model,
    MoweError,
    NumericError,
    config_from_yaml,
    config_to_yaml,
    cosine_lr,
    default_config,
    generate_dataset,
    grad_check,
    keep_top1,
    load_checkpoint,
    load_dataset,
    loss_dep_diversity,
    loss_dep_entropy,
    loss_indep_entropy,
    loss_mowe,
    normalize_config,
    route_dep,
    route_indep,
    run_ablation,
    softmax,
    train,
)

__version__ = "0.1.0"
