"""Tour of the voxel-grid core: volumes, masks, Dice, entropy, file I/O.

Run:  python demos/01_volumes_and_fields.py
"""

import tempfile
from pathlib import Path

import numpy as np

from seedgrow.grid import (
    LN2,
    Mask,
    Volume,
    dice_loss,
    entropy_map,
    mask_l1_diff,
    neighbourhood_std,
    read_volume,
    write_volume,
)

print("== Volumes ==")
rng = np.random.default_rng(0)
vol = Volume(rng.random((3, 16, 16, 16), dtype=np.float32), spacing_mm=(0.5, 0.5, 1.0))
print(f"dims {vol.dims}, channels {vol.channels}, spacing {vol.spacing_mm} mm")

print("\n== Dice loss ==")
a = Mask.zeros((8, 8, 8))
a.data[2:4, 2:4, 2:4] = 1
b = Mask.zeros((8, 8, 8))
b.data[2:4, 2:4, 3:5] = 1  # shifted by one: half overlap
print(f"identical masks      -> {dice_loss(a, a):.6f}")
print(f"half-overlap blocks  -> {dice_loss(a, b):.6f}")
print(f"L1 mask difference   -> {mask_l1_diff(a, b)} voxels")

print("\n== Binary entropy ==")
probs = np.array([0.0, 0.1, 0.5, 0.9, 1.0]).reshape(5, 1, 1)
ent = entropy_map(probs)
for p, e in zip(probs.ravel(), ent.data.ravel()):
    print(f"p={p:.1f} -> entropy {e:.4f} nats (max is ln 2 = {LN2:.4f})")

print("\n== Neighbourhood std (the homogeneity gate) ==")
flat = Volume(np.full((1, 8, 8, 8), 0.3, dtype=np.float32))
print(f"constant volume: sigma = {neighbourhood_std(flat, (4, 4, 4), (1, 1, 1)):.4f}")
noisy = Volume((0.3 + 0.2 * rng.standard_normal((1, 8, 8, 8))).astype(np.float32))
print(f"noisy volume:    sigma = {neighbourhood_std(noisy, (4, 4, 4), (1, 1, 1)):.4f}")

print("\n== SVF round trip ==")
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "demo.svf"
    write_volume(vol, path)
    back = read_volume(path)
    print(f"wrote {path.stat().st_size} bytes; bit-identical after read:",
          np.array_equal(back.data, vol.data))
