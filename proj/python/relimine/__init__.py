"""Python bindings for the relimine C++ core."""

from ._core import (
    ConfigError,
    ParseError,
    StageError,
    candidate_window_count,
    dbscan,
    default_config,
    encode_log,
    mean_abs_index_difference,
    parse_diagnostics,
    render_strip,
    run_pipeline,
    welch_t_test,
)

__all__ = [
    "ConfigError",
    "ParseError",
    "StageError",
    "candidate_window_count",
    "dbscan",
    "default_config",
    "encode_log",
    "mean_abs_index_difference",
    "parse_diagnostics",
    "render_strip",
    "run_pipeline",
    "welch_t_test",
]
