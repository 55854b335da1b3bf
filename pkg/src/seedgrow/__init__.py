"""Promptable 3D segmentation: entropy-gated region growing refined by a
reinforcement-learning seed-placement agent, on synthetic phantoms."""

from .grid import (
    EntropyField,
    Mask,
    ProbabilityField,
    Volume,
    VoxelIndex,
    dice_loss,
    entropy_map,
    mask_l1_diff,
    neighbourhood_std,
    read_mask,
    read_volume,
    write_mask,
    write_volume,
)

__all__ = [
    "EntropyField",
    "Mask",
    "ProbabilityField",
    "Volume",
    "VoxelIndex",
    "dice_loss",
    "entropy_map",
    "mask_l1_diff",
    "neighbourhood_std",
    "read_mask",
    "read_volume",
    "write_mask",
    "write_volume",
]

__version__ = "0.1.0"
