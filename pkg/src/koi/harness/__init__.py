from .config import ExperimentConfig, config_from_dict, config_to_dict, echo_config, load_config
from .modes import (
    MODES,
    KeyStateSet,
    extract_keystates,
    grid_keystates,
    importance_for_mode,
    load_keystates,
    save_keystates,
)
from .runner import (
    aggregate_mode,
    generate_demos,
    load_demos,
    run_experiment,
    run_seed,
    train_bc_policy,
)

__all__ = [
    "MODES",
    "ExperimentConfig",
    "KeyStateSet",
    "aggregate_mode",
    "config_from_dict",
    "config_to_dict",
    "echo_config",
    "extract_keystates",
    "generate_demos",
    "grid_keystates",
    "importance_for_mode",
    "load_config",
    "load_demos",
    "load_keystates",
    "run_experiment",
    "run_seed",
    "save_keystates",
    "train_bc_policy",
]
