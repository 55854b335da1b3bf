"""Synthetic phantoms: lesioned and lesion-free volumes with ground truth.

Writes a slice strip to demos/out/phantom_slices.png.
Run:  python demos/02_phantoms.py
"""

from pathlib import Path

import numpy as np

from seedgrow.phantom import (
    PhantomSpec,
    generate,
    sample_perturbed_seed,
    sample_seed_in_gland,
    sample_seed_in_lesion,
)
from seedgrow.pngutil import encode_gray_png

out_dir = Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)

spec = PhantomSpec(rng_seed=7)
sample = generate(spec)
print(f"dims {sample.volume.dims}, lesion voxels {sample.truth.count()}, "
      f"gland voxels {sample.gland.count()}")
print(f"lesion centres: {[tuple(c) for c in sample.lesion_centres]}")

# the same spec is bit-identical every time
again = generate(spec)
print("deterministic regeneration:", np.array_equal(sample.volume.data, again.volume.data))

# seed sampling protocols
print("in-lesion prompt:", tuple(sample_seed_in_lesion(sample, rng_seed=1)))
print("in-gland prompt: ", tuple(sample_seed_in_gland(sample, rng_seed=1)))
print("perturbed prompt (1-4 voxels off):",
      tuple(sample_perturbed_seed(sample, 4, rng_seed=1)))

# slice strip through the first lesion centre: channel 0 plus truth outline
centre = sample.lesion_centres[0]
rows = []
for offset in (-4, -2, 0, 2, 4):
    idx = int(np.clip(centre.a + offset, 0, sample.volume.dims[0] - 1))
    plane = (np.clip(sample.volume.data[0][idx], 0, 1) * 255).astype(np.uint8)
    overlay = plane.copy()
    overlay[sample.truth.data[idx] > 0] = 255
    rows.append(np.concatenate([plane, np.full((plane.shape[0], 2), 128,
                                                dtype=np.uint8), overlay], axis=1))
strip = np.concatenate(rows, axis=0)
png_path = out_dir / "phantom_slices.png"
png_path.write_bytes(encode_gray_png(strip))
print(f"slice strip (volume | truth overlay) written to {png_path}")

negative = generate(PhantomSpec(lesion_count=0, rng_seed=8))
print(f"negative case: truth voxels = {negative.truth.count()}")
