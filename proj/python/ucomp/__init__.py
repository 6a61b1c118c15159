"""Unpaired point cloud completion engine."""

from ._ucomp import (
    IoError,
    Model,
    NumericError,
    ShapeError,
    ValidationError,
    eval_metric,
    full_chamfer,
    generate_complete,
    make_partial,
    normalize,
    partial_chamfer,
    read_ply,
    read_xyz,
    run_cli,
    view_directions,
    write_ply,
    write_xyz,
)

__all__ = [
    "IoError",
    "Model",
    "NumericError",
    "ShapeError",
    "ValidationError",
    "eval_metric",
    "full_chamfer",
    "generate_complete",
    "make_partial",
    "normalize",
    "partial_chamfer",
    "read_ply",
    "read_xyz",
    "run_cli",
    "view_directions",
    "write_ply",
    "write_xyz",
]
