"""Compound-task trace generation, validation and analysis."""

from ._cotkit import (
    ContractError,
    DatasetIoError,
    GenerationError,
    ParseError,
    RangeError,
    __version__,
    analyze,
    attention_decay_profile,
    build_dataset,
    coverage_probability,
    drop_accuracy,
    gradient_alignment_sim,
    join_tokens,
    parse_trace,
    read_dataset,
    render,
    rope_angles,
    rope_score,
    run_cli,
    sample_trace,
    sha256_hex,
    solve,
    split_tokens,
    validate,
)

__all__ = [
    "ContractError",
    "DatasetIoError",
    "GenerationError",
    "ParseError",
    "RangeError",
    "__version__",
    "analyze",
    "attention_decay_profile",
    "build_dataset",
    "coverage_probability",
    "drop_accuracy",
    "gradient_alignment_sim",
    "join_tokens",
    "parse_trace",
    "read_dataset",
    "render",
    "rope_angles",
    "rope_score",
    "run_cli",
    "sample_trace",
    "sha256_hex",
    "solve",
    "split_tokens",
    "validate",
]
