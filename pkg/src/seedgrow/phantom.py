"""Synthetic multi-channel phantom volumes with lesion ground truth.

Each phantom holds a bright "gland" ellipsoid inside a darker background
and zero or more lesions: unions of per-axis-jittered ellipsoids whose
surfaces are warped by a low-frequency radial perturbation, so region
growing has irregular boundaries to adapt to. Channel 0 carries the full
lesion contrast; the remaining channels carry fixed fractions of it.

Everything is a pure function of (spec, seed) via the Philox stream, so
identical specs produce bit-identical samples on any platform.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import distance_transform_cdt, gaussian_filter

from .errors import DataError
from .grid import Mask, Volume, VoxelIndex, as_voxel
from .rng import substream

# Per-channel scaling of the lesion contrast (channel 0 always full).
CHANNEL_CONTRAST = (1.0, 0.85, 0.7, 0.6, 0.55, 0.5)

# Fixed appearance constants; kept out of PhantomSpec so that specs stay
# small and samples remain comparable across experiments. Channel base
# levels are fixed (not jittered): per-sample intensity fingerprints
# would let a probability model identify training samples and memorize
# their label wobble instead of generalizing.
CHANNEL_BASE = (0.26, 0.24, 0.28, 0.25, 0.27, 0.23)
GLAND_OFFSET = 0.10
GLAND_RADIUS_FRAC = 0.42
GLAND_JITTER_VOX = 2.0
DEFORM_STRENGTH = 0.18

# Partial-volume ramp half-width (voxels) at lesion surfaces, active only
# when heterogeneity > 0: lesion intensity falls across a thin shell
# instead of stepping, so boundary voxels are genuinely ambiguous. In the
# homogeneous limit (heterogeneity = 0) lesions are ideal sharp objects.
PV_RAMP_VOX = 1.0


@dataclass(frozen=True)
class PhantomSpec:
    """Generation request; all randomness derives from rng_seed.

    noise_std is the background (non-lesion) noise; heterogeneity is the
    within-lesion intensity std. The default background noise is strong:
    healthy tissue must fail the region-growing homogeneity gate (lesions
    are homogeneous objects inside textured tissue), which is what makes
    lesion-free scans grow almost nothing from a gland prompt.
    """

    dims: tuple = (32, 32, 32)
    channels: int = 3
    lesion_count: int = 1
    lesion_radius_range: tuple = (5, 7)
    lesion_contrast: float = 0.45
    heterogeneity: float = 0.05
    noise_std: float = 0.50
    decoy_count: int = 2
    rng_seed: int = 0

    def __post_init__(self):
        lo, hi = self.lesion_radius_range
        if lo > hi:
            raise DataError(f"lesion_radius_range min {lo} > max {hi}")
        if lo < 1:
            raise DataError("lesion radii must be >= 1 voxel")
        if 2 * hi + 1 > min(self.dims):
            raise DataError(f"max lesion radius {hi} does not fit inside dims {self.dims}")
        if self.lesion_count < 0:
            raise DataError("lesion_count must be >= 0")
        if self.channels < 1 or self.channels > len(CHANNEL_CONTRAST):
            raise DataError(f"channels must be in [1, {len(CHANNEL_CONTRAST)}]")
        for name in ("lesion_contrast", "heterogeneity", "noise_std"):
            val = getattr(self, name)
            if not np.isfinite(val) or (name != "lesion_contrast" and val < 0):
                raise DataError(f"{name} must be finite{' and >= 0' if name != 'lesion_contrast' else ''}")


@dataclass(frozen=True, eq=False)
class PhantomSample:
    volume: Volume
    truth: Mask
    lesion_centres: list
    gland: Mask
    decoys: Mask | None = None


def _ellipsoid(dims, centre, radii) -> np.ndarray:
    grids = np.ogrid[0:dims[0], 0:dims[1], 0:dims[2]]
    d2 = sum(((g - c) / r) ** 2 for g, c, r in zip(grids, centre, radii))
    return np.asarray(d2)


def _lesion_mask(dims, centre, radii, rng, heterogeneity: float) -> tuple:
    """Deformed ellipsoid, its label mask, and its intensity profile.

    The intensity profile is 1 deep inside, 0 outside, and (when
    heterogeneity > 0) falls linearly across a PV_RAMP_VOX-wide
    partial-volume shell centred on the labelled surface, crossing 0.5
    exactly where the label flips.
    """
    d = np.sqrt(_ellipsoid(dims, centre, radii))
    warp = gaussian_filter(rng.standard_normal(dims), sigma=3.0, mode="nearest")
    scale = np.abs(warp).max()
    if scale > 0:
        warp = warp / scale
    signed = d - (1.0 + DEFORM_STRENGTH * warp)   # <= 0 inside the labelled surface
    mask = signed <= 0.0
    if heterogeneity <= 0:
        return mask, mask.astype(np.float64)
    r_geo = float(np.cbrt(np.prod(radii)))        # voxels per unit of `signed`
    profile = np.clip(0.5 - signed * r_geo / (2.0 * PV_RAMP_VOX), 0.0, 1.0)
    return mask, profile


def generate(spec: PhantomSpec) -> PhantomSample:
    """Deterministically generate one phantom from its spec."""
    dims = tuple(int(d) for d in spec.dims)
    H, W, D = dims
    rng_shape = substream(spec.rng_seed, 0)
    rng_noise = substream(spec.rng_seed, 1)

    centre = (np.array(dims, dtype=np.float64) / 2.0
              + rng_shape.uniform(-GLAND_JITTER_VOX, GLAND_JITTER_VOX, size=3))
    gland_radii = np.array(dims, dtype=np.float64) * GLAND_RADIUS_FRAC
    gland_radii *= rng_shape.uniform(0.92, 1.08, size=3)
    gland = _ellipsoid(dims, centre, gland_radii) <= 1.0

    truth = np.zeros(dims, dtype=bool)
    profile = np.zeros(dims, dtype=np.float64)
    centres: list[VoxelIndex] = []
    ramp = spec.noise_std > 0
    rmin, rmax = spec.lesion_radius_range
    for k in range(spec.lesion_count):
        placed = False
        for _ in range(200):
            radii = rng_shape.uniform(rmin, rmax, size=3)
            # candidate centre: inside the gland with the whole deformed
            # lesion (max extent <= 1.18 * radius + ramp) strictly in-grid;
            # the gland-extension hull may clip at the grid boundary
            margin = radii * 1.18 + 2.0
            if any(margin[i] >= dims[i] - margin[i] for i in range(3)):
                continue
            cand = np.array([rng_shape.uniform(margin[i], dims[i] - margin[i])
                             for i in range(3)])
            if not gland[tuple(np.round(cand).astype(int))]:
                continue
            lesion, les_profile = _lesion_mask(dims, cand, radii, rng_shape, ramp)
            if not lesion.any():
                continue
            footprint = lesion | (les_profile > 0)
            if (footprint & ((profile > 0) | truth)).any():
                continue
            hull = _ellipsoid(dims, cand, radii * 1.4) <= 1.0
            truth |= lesion
            profile = np.maximum(profile, les_profile)
            gland |= hull  # keep every lesion voxel strictly inside the gland
            centres.append(as_voxel(np.round(cand).astype(int)))
            placed = True
            break
        if not placed:
            raise DataError(
                f"could not place lesion {k + 1}/{spec.lesion_count} inside dims {dims}")

    # Decoys: lesion-bright nodules that keep the full background texture,
    # so they are image-ambiguous at coarse scale but fail the homogeneity
    # gate and are confidently non-lesion to a trained model. Without
    # noise there is no texture to hide behind, so no decoys either.
    # Failed placements are tolerated (decoys are scenery, not truth).
    decoys = np.zeros(dims, dtype=bool)
    if spec.noise_std > 0:
        for _ in range(spec.decoy_count):
            for _ in range(100):
                radii = rng_shape.uniform(rmin, rmax, size=3) * 0.9
                margin = radii * 1.18 + 2.0
                if any(margin[i] >= dims[i] - margin[i] for i in range(3)):
                    continue
                cand = np.array([rng_shape.uniform(margin[i], dims[i] - margin[i])
                                 for i in range(3)])
                if not gland[tuple(np.round(cand).astype(int))]:
                    continue
                blob = _ellipsoid(dims, cand, radii) <= 1.0
                halo = _ellipsoid(dims, cand, radii + 2.0) <= 1.0
                if (halo & ((profile > 0) | truth | decoys)).any():
                    continue
                decoys |= blob
                gland |= _ellipsoid(dims, cand, radii * 1.2) <= 1.0
                break

    data = np.zeros((spec.channels, H, W, D), dtype=np.float64)
    for ch in range(spec.channels):
        plane = np.full(dims, CHANNEL_BASE[ch])
        plane[gland] += GLAND_OFFSET
        plane += profile * (spec.lesion_contrast * CHANNEL_CONTRAST[ch])
        # the 1.12 factor offsets the brightness the noise clipping at 1.0
        # removes, keeping decoys and lesions matched in coarse pooled views
        plane[decoys] += 1.12 * spec.lesion_contrast * CHANNEL_CONTRAST[ch]
        if spec.heterogeneity > 0:
            jitter = rng_noise.standard_normal(dims) * spec.heterogeneity
            plane[truth] += jitter[truth]
        if spec.noise_std > 0:
            noise = rng_noise.standard_normal(dims) * spec.noise_std
            plane[~truth] += noise[~truth]
        data[ch] = plane
    data = np.clip(data, 0.0, 1.0)

    return PhantomSample(
        volume=Volume(data.astype(np.float32)),
        truth=Mask(truth.astype(np.uint8)),
        lesion_centres=centres,
        gland=Mask(gland.astype(np.uint8)),
        decoys=Mask(decoys.astype(np.uint8)),
    )


# ---------------------------------------------------------------------------
# Seed sampling
# ---------------------------------------------------------------------------

def _uniform_voxel(mask: Mask, rng) -> VoxelIndex:
    flat = np.flatnonzero(mask.data)
    pick = int(flat[int(rng.integers(0, flat.size))])
    return as_voxel(np.unravel_index(pick, mask.dims))


def sample_seed_in_lesion(sample: PhantomSample, rng_seed: int) -> VoxelIndex:
    """Uniformly random voxel with truth(v) = 1."""
    if sample.truth.count() == 0:
        raise DataError("truth mask is empty; use sample_seed_in_gland for negative cases")
    return _uniform_voxel(sample.truth, substream(rng_seed, 10))


def sample_seed_in_gland(sample: PhantomSample, rng_seed: int) -> VoxelIndex:
    """Uniformly random voxel with gland(v) = 1."""
    if sample.gland.count() == 0:
        raise DataError("gland mask is empty")
    return _uniform_voxel(sample.gland, substream(rng_seed, 11))


def sample_perturbed_seed(sample: PhantomSample, max_offset_vox: int, rng_seed: int) -> VoxelIndex:
    """Off-lesion prompt: Chebyshev distance to the lesion in [1, max_offset_vox]."""
    if sample.truth.count() == 0:
        raise DataError("truth mask is empty; cannot perturb around an absent lesion")
    if max_offset_vox < 1:
        raise DataError("max_offset_vox must be >= 1")
    dist = distance_transform_cdt(1 - sample.truth.data, metric="chessboard")
    band = Mask(((dist >= 1) & (dist <= max_offset_vox)).astype(np.uint8))
    if band.count() == 0:
        raise DataError("no voxels within the requested offset band")
    return _uniform_voxel(band, substream(rng_seed, 12))


def chebyshev_distance_to_mask(mask: Mask) -> np.ndarray:
    """Per-voxel Chebyshev distance to the nearest set voxel (0 inside)."""
    if mask.count() == 0:
        return np.full(mask.dims, np.iinfo(np.int32).max, dtype=np.int64)
    return np.asarray(distance_transform_cdt(1 - mask.data, metric="chessboard"), dtype=np.int64)
