"""Multi-view mask fusion onto Gaussian scenes."""

from ._core import (
    ConfigError,
    FormatError,
    StageError,
    default_tau_grid,
    load_scene,
    miou_macc,
    pq_search,
    read_tensor,
    run_pipeline,
    set_thread_count,
    synth,
    thread_count,
)

__all__ = [
    "ConfigError",
    "FormatError",
    "StageError",
    "default_tau_grid",
    "load_scene",
    "miou_macc",
    "pq_search",
    "read_tensor",
    "run_pipeline",
    "set_thread_count",
    "synth",
    "thread_count",
]
