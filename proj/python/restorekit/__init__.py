"""Residual-diffusion image restoration toolkit.

Images are float64 arrays of shape (H, W, 3) with values in [0, 1].
"""

from ._core import (
    ConfigError,
    Model,
    RestorekitError,
    Schedule,
    ShapeError,
    SizeError,
    ValidationError,
    build_schedule,
    coupled_categories,
    degrade,
    forward_sample,
    isolated_categories,
    match_sequences,
    parse_config,
    preset_config,
    procedural_image,
    psnr,
    run,
    sample_with,
    ssim,
    taxonomy,
    tile_restore,
)

__all__ = [
    "ConfigError",
    "Model",
    "RestorekitError",
    "Schedule",
    "ShapeError",
    "SizeError",
    "ValidationError",
    "build_schedule",
    "coupled_categories",
    "degrade",
    "forward_sample",
    "isolated_categories",
    "match_sequences",
    "parse_config",
    "preset_config",
    "procedural_image",
    "psnr",
    "run",
    "sample_with",
    "ssim",
    "taxonomy",
    "tile_restore",
]
