"""Seeded iterative region expansion gated by intensity homogeneity and
surrogate entropy.

Starting from a single seed voxel, each iteration examines, for every
newly included voxel, all not-yet-included voxels in its Chebyshev ball
and includes those whose neighbourhood intensity std and entropy both
fall below their thresholds. Both gates are functions of the static image
and entropy field, never of the evolving mask, so the result is
independent of traversal order. The seed itself is always included.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DataError
from .grid import LN2, Coord, EntropyField, Mask, Volume, as_voxel, neighbourhood_std_field


@dataclass(frozen=True)
class GrowConfig:
    """Expansion rule parameters.

    radius follows the reference setting (3, 3, 3); `desk()` gives the
    reduced preset for 32-voxel grids, where a radius-3 hop would cross
    most of a lesion and destroy locality.
    """

    radius: tuple = (3, 3, 3)
    tau_sigma: float = 0.3
    tau_e: float = 0.1
    max_iters: int = 64

    def __post_init__(self):
        r = tuple(int(x) for x in self.radius)
        if any(x < 1 for x in r):
            raise DataError(f"radius components must be >= 1, got {self.radius}")
        if not (self.tau_sigma > 0):
            raise DataError("tau_sigma must be > 0")
        if not (0 < self.tau_e <= LN2):
            raise DataError(f"tau_e must be in (0, ln 2], got {self.tau_e}")
        if self.max_iters < 1:
            raise DataError("max_iters must be >= 1")
        object.__setattr__(self, "radius", r)

    @classmethod
    def paper(cls, **kw) -> "GrowConfig":
        return cls(radius=(3, 3, 3), **kw)

    @classmethod
    def desk(cls, **kw) -> "GrowConfig":
        return cls(radius=(1, 1, 1), **kw)

    def window_voxels(self) -> int:
        out = 1
        for r in self.radius:
            out *= 2 * r + 1
        return out


@dataclass(frozen=True, eq=False)
class GrowResult:
    mask: Mask
    iterations_run: int
    converged: bool
    frontier_history: list = field(default_factory=list)


def admissible_field(x: Volume, entropy, cfg: GrowConfig) -> np.ndarray:
    """Static inclusion predicate: sigma_x(v) < tau_sigma and y_e(v) < tau_e."""
    ent = entropy.data if isinstance(entropy, EntropyField) else np.asarray(entropy)
    if ent.shape != x.dims:
        raise DataError(f"entropy dims {ent.shape} != volume dims {x.dims}")
    sigma = neighbourhood_std_field(x, cfg.radius)
    return (sigma < cfg.tau_sigma) & (ent < cfg.tau_e)


def _ball_offsets(radius) -> np.ndarray:
    ra, rb, rc = radius
    offs = [(da, db, dc)
            for da, db, dc in itertools.product(
                range(-ra, ra + 1), range(-rb, rb + 1), range(-rc, rc + 1))
            if (da, db, dc) != (0, 0, 0)]
    return np.array(offs, dtype=np.int64)


def grow(x: Volume, entropy, seed: Coord, cfg: GrowConfig | None = None,
         admissible: np.ndarray | None = None) -> GrowResult:
    """Run region growing from one seed until stable or max_iters sweeps.

    `admissible` lets callers reuse a precomputed inclusion field when
    many seeds are grown on the same volume (the gates are static).
    """
    cfg = cfg or GrowConfig()
    seed = x.check_inside(seed)
    if admissible is None:
        admissible = admissible_field(x, entropy, cfg)

    dims = x.dims
    included = np.zeros(dims, dtype=bool)
    included[seed] = True
    offsets = _ball_offsets(cfg.radius)
    frontier = np.array([seed], dtype=np.int64)

    history: list[int] = []
    iterations = 0
    converged = False
    while iterations < cfg.max_iters:
        iterations += 1
        cand = (frontier[:, None, :] + offsets[None, :, :]).reshape(-1, 3)
        inb = ((cand >= 0) & (cand < np.array(dims))).all(axis=1)
        cand = cand[inb]
        flat = np.ravel_multi_index((cand[:, 0], cand[:, 1], cand[:, 2]), dims)
        flat = np.unique(flat)
        take = admissible.reshape(-1)[flat] & ~included.reshape(-1)[flat]
        flat = flat[take]
        history.append(int(flat.size))
        if flat.size == 0:
            converged = True
            break
        included.reshape(-1)[flat] = True
        frontier = np.stack(np.unravel_index(flat, dims), axis=1)

    return GrowResult(mask=Mask(included.astype(np.uint8)),
                      iterations_run=iterations,
                      converged=converged,
                      frontier_history=history)


def grow_oracle(x: Volume, entropy, seed: Coord, cfg: GrowConfig | None = None) -> Mask:
    """Independent reference: flood fill over the static admissible set.

    Morphological propagation (scipy) of the seed inside admissible | {seed}
    under the Chebyshev-ball adjacency; this is the uncapped limit of `grow`
    and shares no traversal machinery with it.
    """
    cfg = cfg or GrowConfig()
    seed = x.check_inside(seed)
    region = admissible_field(x, entropy, cfg).copy()
    region[seed] = True
    structure = np.ones(tuple(2 * r + 1 for r in cfg.radius), dtype=bool)
    seed_im = np.zeros(x.dims, dtype=bool)
    seed_im[seed] = True
    filled = ndimage.binary_propagation(seed_im, structure=structure, mask=region)
    return Mask(filled.astype(np.uint8))
