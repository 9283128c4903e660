"""Joint super-resolution and segmentation of OCT B-scans (C++ core)."""

from ._core import (
    NUM_CLASSES,
    PATCH_SIZE,
    bicubic_upsample,
    class_names,
    decode_rgb,
    dice_coefficient,
    downsample4,
    evaluate,
    generate_scan,
    grid_rows,
    median_filter3,
    miou,
    palette,
    patch_offsets,
    predict,
    receptive_field,
    render_rgb,
    score_map_size,
    unsharp_mask,
)

__all__ = [
    "NUM_CLASSES",
    "PATCH_SIZE",
    "bicubic_upsample",
    "class_names",
    "decode_rgb",
    "dice_coefficient",
    "downsample4",
    "evaluate",
    "generate_scan",
    "grid_rows",
    "median_filter3",
    "miou",
    "palette",
    "patch_offsets",
    "predict",
    "receptive_field",
    "render_rgb",
    "score_map_size",
    "unsharp_mask",
]
