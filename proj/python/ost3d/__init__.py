"""Python bindings for the ost3d point-cloud segmentation library."""

from ._ost3d import (
    ConfigError,
    Error,
    IoError,
    NonFiniteError,
    ParseError,
    ShapeError,
    box_iou,
    dbscan,
    evaluate,
    gen,
    generate_scene,
    hungarian,
    infer,
    iou,
    load_pointcloud,
    mask_to_box,
    parse_prompt,
    pretrain,
    resolve_config,
)

__all__ = [
    "ConfigError",
    "Error",
    "IoError",
    "NonFiniteError",
    "ParseError",
    "ShapeError",
    "box_iou",
    "dbscan",
    "evaluate",
    "gen",
    "generate_scene",
    "hungarian",
    "infer",
    "iou",
    "load_pointcloud",
    "mask_to_box",
    "parse_prompt",
    "pretrain",
    "resolve_config",
]
