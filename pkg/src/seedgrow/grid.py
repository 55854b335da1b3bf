"""Voxel-grid data model.

Volumes, binary masks, per-voxel probability and entropy fields, the
overlap/heterogeneity metrics that gate region growing, and the binary
file formats (.svf volumes, .svm masks) shared by every other module.

Axis convention: a grid position is (a, b, c) indexing an (H, W, D)
array. Volumes carry a leading channel axis, shape (C, H, W, D).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Union

import numpy as np
from scipy.special import xlogy

from .errors import DimensionMismatch, FileFormatError

LN2 = float(np.log(2.0))

# Smoothing in both Dice terms so empty-vs-empty scores loss 0
# (a correct "nothing to segment" prediction, not a 0/0).
DICE_EPS = 1e-6


class VoxelIndex(NamedTuple):
    """Non-negative grid coordinates. Also used as a symmetric radius triple."""

    a: int
    b: int
    c: int


Coord = Union[VoxelIndex, tuple]


def as_voxel(v: Coord) -> VoxelIndex:
    a, b, c = (int(x) for x in v)
    return VoxelIndex(a, b, c)


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Volume:
    """Multi-channel 3D scalar field with spacing metadata.

    data: (C, H, W, D) float32, all values finite.
    spacing_mm: physical voxel size along (a, b, c), components > 0.
    """

    data: np.ndarray
    spacing_mm: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim == 3:
            arr = arr[None]
        if arr.ndim != 4:
            raise DimensionMismatch(f"volume data must be (C,H,W,D), got shape {arr.shape}")
        if arr.size == 0:
            raise DimensionMismatch("volume dimensions must be positive")
        if not np.all(np.isfinite(arr)):
            raise ValueError("volume intensities must be finite")
        sp = tuple(float(s) for s in self.spacing_mm)
        if len(sp) != 3 or any(s <= 0 or not np.isfinite(s) for s in sp):
            raise ValueError(f"spacing_mm must be three positive reals, got {self.spacing_mm}")
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "spacing_mm", sp)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def dims(self) -> tuple:
        return self.data.shape[1:]

    def contains(self, v: Coord) -> bool:
        a, b, c = as_voxel(v)
        H, W, D = self.dims
        return 0 <= a < H and 0 <= b < W and 0 <= c < D

    def check_inside(self, v: Coord) -> VoxelIndex:
        vi = as_voxel(v)
        if not self.contains(vi):
            raise DimensionMismatch(f"voxel {tuple(vi)} outside grid of dims {self.dims}")
        return vi


@dataclass(eq=False)
class Mask:
    """Binary occupancy grid, shape (H, W, D), values in {0, 1}.

    The only mutable grid type: a single owner may flip voxels in place;
    reads are safe from any number of threads.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data)
        if arr.ndim != 3:
            raise DimensionMismatch(f"mask data must be (H,W,D), got shape {arr.shape}")
        if arr.dtype != np.uint8:
            vals = np.unique(arr)
            if not np.all(np.isin(vals, (0, 1))):
                raise ValueError("mask values must be 0 or 1")
            arr = arr.astype(np.uint8)
        elif arr.size and arr.max() > 1:
            raise ValueError("mask values must be 0 or 1")
        self.data = arr

    @classmethod
    def zeros(cls, dims: tuple) -> "Mask":
        return cls(np.zeros(dims, dtype=np.uint8))

    @classmethod
    def from_voxels(cls, dims: tuple, voxels) -> "Mask":
        m = cls.zeros(dims)
        for v in voxels:
            a, b, c = as_voxel(v)
            m.data[a, b, c] = 1
        return m

    @property
    def dims(self) -> tuple:
        return self.data.shape

    def count(self) -> int:
        return int(self.data.sum())

    def copy(self) -> "Mask":
        return Mask(self.data.copy())

    def bool(self) -> np.ndarray:
        return self.data.astype(bool)


@dataclass(frozen=True, eq=False)
class ProbabilityField:
    """Per-voxel probabilities in [0, 1], shape (H, W, D)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise DimensionMismatch(f"probability field must be (H,W,D), got {arr.shape}")
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("probabilities must lie in [0, 1]")
        object.__setattr__(self, "data", arr)

    @property
    def dims(self) -> tuple:
        return self.data.shape


@dataclass(frozen=True, eq=False)
class EntropyField:
    """Per-voxel binary entropy in nats, range [0, ln 2], shape (H, W, D)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise DimensionMismatch(f"entropy field must be (H,W,D), got {arr.shape}")
        if arr.size and (arr.min() < 0.0 or arr.max() > LN2 + 1e-12):
            raise ValueError("entropy values must lie in [0, ln 2]")
        object.__setattr__(self, "data", arr)

    @property
    def dims(self) -> tuple:
        return self.data.shape


# ---------------------------------------------------------------------------
# Metrics and per-voxel maps
# ---------------------------------------------------------------------------

def _as_field(x, name: str) -> np.ndarray:
    if isinstance(x, (Mask, ProbabilityField, EntropyField)):
        return x.data
    arr = np.asarray(x)
    if arr.ndim != 3:
        raise DimensionMismatch(f"{name} must be a 3D field, got shape {arr.shape}")
    return arr


def dice_loss(pred, truth, eps: float = DICE_EPS) -> float:
    """Smoothed Dice loss: 1 - (2*sum(p*t) + eps) / (sum(p) + sum(t) + eps).

    `pred` may be a binary mask or a soft probability field, so the
    surrogate can train directly against this loss. Identical nonempty
    inputs score ~0; disjoint nonempty inputs score ~1; two empty masks
    score 0.
    """
    p = _as_field(pred, "pred").astype(np.float64)
    t = _as_field(truth, "truth").astype(np.float64)
    if p.shape != t.shape:
        raise DimensionMismatch(f"pred dims {p.shape} != truth dims {t.shape}")
    inter = float((p * t).sum())
    total = float(p.sum() + t.sum())
    return 1.0 - (2.0 * inter + eps) / (total + eps)


def binary_entropy(p: np.ndarray) -> np.ndarray:
    """Elementwise -[p ln p + (1-p) ln(1-p)], with the 0*log(0) = 0 limit."""
    p = np.asarray(p, dtype=np.float64)
    ent = -(xlogy(p, p) + xlogy(1.0 - p, 1.0 - p))
    # xlogy keeps the p in {0,1} endpoints exact; clamp float dust elsewhere
    # (+0.0 normalises the negative zero that -xlogy(0,0) produces)
    return np.clip(ent, 0.0, LN2) + 0.0


def entropy_map(p) -> EntropyField:
    """Per-voxel binary entropy of a probability field, in nats."""
    arr = p.data if isinstance(p, ProbabilityField) else ProbabilityField(np.asarray(p)).data
    return EntropyField(binary_entropy(arr))


def mask_l1_diff(a, b) -> int:
    """Number of voxels on which two masks disagree."""
    pa = _as_field(a, "a")
    pb = _as_field(b, "b")
    if pa.shape != pb.shape:
        raise DimensionMismatch(f"mask dims {pa.shape} != {pb.shape}")
    return int(np.abs(pa.astype(np.int64) - pb.astype(np.int64)).sum())


# ---------------------------------------------------------------------------
# Neighbourhood statistics
# ---------------------------------------------------------------------------

def _window_bounds(n: int, r: int) -> tuple:
    """Per-position clipped window [lo, hi) along one axis of length n."""
    idx = np.arange(n)
    lo = np.clip(idx - r, 0, None)
    hi = np.clip(idx + r, None, n - 1) + 1
    return lo, hi


def _window_sum_field(arr: np.ndarray, radius: VoxelIndex) -> np.ndarray:
    """Sum of `arr` over the clipped window v +- radius, for every voxel v.

    Uses a padded 3D integral image; windows at grid borders contain only
    in-bounds voxels (clipping, never padding).
    """
    H, W, D = arr.shape
    s = np.zeros((H + 1, W + 1, D + 1), dtype=np.float64)
    s[1:, 1:, 1:] = arr.astype(np.float64).cumsum(0).cumsum(1).cumsum(2)
    la, ha = _window_bounds(H, radius.a)
    lb, hb = _window_bounds(W, radius.b)
    lc, hc = _window_bounds(D, radius.c)
    A0, A1 = la[:, None, None], ha[:, None, None]
    B0, B1 = lb[None, :, None], hb[None, :, None]
    C0, C1 = lc[None, None, :], hc[None, None, :]
    return (s[A1, B1, C1] - s[A0, B1, C1] - s[A1, B0, C1] - s[A1, B1, C0]
            + s[A0, B0, C1] + s[A0, B1, C0] + s[A1, B0, C0] - s[A0, B0, C0])


def _window_count_field(dims: tuple, radius: VoxelIndex) -> np.ndarray:
    H, W, D = dims
    la, ha = _window_bounds(H, radius.a)
    lb, hb = _window_bounds(W, radius.b)
    lc, hc = _window_bounds(D, radius.c)
    return ((ha - la)[:, None, None].astype(np.float64)
            * (hb - lb)[None, :, None]
            * (hc - lc)[None, None, :])


def local_mean_std(channel: np.ndarray, radius: Coord) -> tuple:
    """Clipped-window mean and population std fields for one channel."""
    r = as_voxel(radius)
    n = _window_count_field(channel.shape, r)
    mean = _window_sum_field(channel, r) / n
    meansq = _window_sum_field(np.square(channel, dtype=np.float64), r) / n
    var = np.maximum(meansq - mean * mean, 0.0)
    return mean, np.sqrt(var)


def neighbourhood_std_field(x: Volume, radius: Coord) -> np.ndarray:
    """Per-voxel neighbourhood intensity std, reduced over channels by max.

    A region should stop growing if ANY channel shows heterogeneity, hence
    the max reduction.
    """
    r = as_voxel(radius)
    out = np.zeros(x.dims, dtype=np.float64)
    for ch in x.data:
        _, std = local_mean_std(ch, r)
        np.maximum(out, std, out=out)
    return out


def neighbourhood_std(x: Volume, v: Coord, radius: Coord) -> float:
    """Population std of intensities in the clipped window v +- radius.

    Direct (single window) evaluation; multi-channel volumes reduce by
    taking the max over per-channel stds.
    """
    vi = x.check_inside(v)
    r = as_voxel(radius)
    H, W, D = x.dims
    asl = slice(max(0, vi.a - r.a), min(H - 1, vi.a + r.a) + 1)
    bsl = slice(max(0, vi.b - r.b), min(W - 1, vi.b + r.b) + 1)
    csl = slice(max(0, vi.c - r.c), min(D - 1, vi.c + r.c) + 1)
    window = x.data[:, asl, bsl, csl].astype(np.float64)
    stds = window.reshape(x.channels, -1).std(axis=1)
    return float(stds.max())


def gradient_magnitude(channel: np.ndarray) -> np.ndarray:
    """Central-difference gradient magnitude (one-sided at borders).

    Axes of extent 1 contribute zero gradient.
    """
    arr = channel.astype(np.float64)
    total = np.zeros_like(arr)
    for axis in range(3):
        if arr.shape[axis] >= 2:
            g = np.gradient(arr, axis=axis)
            total += g * g
    return np.sqrt(total)


# ---------------------------------------------------------------------------
# File formats: .svf (volume) and .svm (mask)
# ---------------------------------------------------------------------------
# One UTF-8 JSON header line terminated by '\n', then the raw payload:
# C*H*W*D little-endian float32 in channel-major (a, then b, then c) order
# for volumes, H*W*D uint8 for masks.

_MAGIC = "SVF1"


def _write_svf(path, header: dict, payload: bytes) -> None:
    line = json.dumps(header, separators=(",", ":")) + "\n"
    with open(path, "wb") as fh:
        fh.write(line.encode("utf-8"))
        fh.write(payload)


def _read_header(fh, path) -> dict:
    line = fh.readline()
    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FileFormatError(f"{path}: header is not a JSON line: {exc}", field="header")
    if not isinstance(header, dict):
        raise FileFormatError(f"{path}: header must be a JSON object", field="header")
    if header.get("magic") != _MAGIC:
        raise FileFormatError(f"{path}: bad magic {header.get('magic')!r}", field="magic")
    dims = header.get("dims")
    if (not isinstance(dims, list) or len(dims) != 3
            or any(not isinstance(d, int) or d <= 0 for d in dims)):
        raise FileFormatError(f"{path}: dims must be three positive ints, got {dims!r}",
                              field="dims")
    return header


def write_volume(vol: Volume, path) -> None:
    header = {
        "magic": _MAGIC,
        "dims": list(vol.dims),
        "channels": vol.channels,
        "spacing_mm": list(vol.spacing_mm),
        "dtype": "f32le",
    }
    payload = vol.data.astype("<f4").tobytes(order="C")
    _write_svf(path, header, payload)


def _read_volume_file(fh, name) -> Volume:
    header = _read_header(fh, name)
    if header.get("dtype") != "f32le":
        raise FileFormatError(f"{name}: unknown dtype {header.get('dtype')!r} for volume",
                              field="dtype")
    channels = header.get("channels")
    if not isinstance(channels, int) or channels <= 0:
        raise FileFormatError(f"{name}: channels must be a positive int, got {channels!r}",
                              field="channels")
    spacing = header.get("spacing_mm")
    if (not isinstance(spacing, list) or len(spacing) != 3
            or any(not isinstance(s, (int, float)) or s <= 0 for s in spacing)):
        raise FileFormatError(f"{name}: spacing_mm must be three positive reals",
                              field="spacing_mm")
    dims = header["dims"]
    expected = channels * dims[0] * dims[1] * dims[2] * 4
    payload = fh.read()
    if len(payload) != expected:
        raise FileFormatError(
            f"{name}: payload is {len(payload)} bytes, dims imply {expected}", field="payload")
    data = np.frombuffer(payload, dtype="<f4").reshape(channels, *dims)
    return Volume(data=data, spacing_mm=tuple(spacing))


def read_volume(path) -> Volume:
    with open(path, "rb") as fh:
        return _read_volume_file(fh, path)


def write_mask(mask: Mask, path) -> None:
    header = {
        "magic": _MAGIC,
        "dims": list(mask.dims),
        "channels": 1,
        "spacing_mm": [1.0, 1.0, 1.0],
        "dtype": "u8",
    }
    _write_svf(path, header, mask.data.tobytes(order="C"))


def mask_bytes(mask: Mask) -> bytes:
    """The exact .svm file image, as bytes (for wire transfer)."""
    header = {
        "magic": _MAGIC,
        "dims": list(mask.dims),
        "channels": 1,
        "spacing_mm": [1.0, 1.0, 1.0],
        "dtype": "u8",
    }
    line = json.dumps(header, separators=(",", ":")) + "\n"
    return line.encode("utf-8") + mask.data.tobytes(order="C")


def read_volume_bytes(data: bytes) -> Volume:
    """Parse an in-memory .svf image (uploads)."""
    import io

    return _read_volume_file(io.BytesIO(data), "<upload>")


def read_mask(path) -> Mask:
    with open(path, "rb") as fh:
        header = _read_header(fh, path)
        if header.get("dtype") != "u8":
            raise FileFormatError(f"{path}: unknown dtype {header.get('dtype')!r} for mask",
                                  field="dtype")
        dims = header["dims"]
        expected = dims[0] * dims[1] * dims[2]
        payload = fh.read()
    if len(payload) != expected:
        raise FileFormatError(
            f"{path}: payload is {len(payload)} bytes, dims imply {expected}", field="payload")
    data = np.frombuffer(payload, dtype=np.uint8).reshape(dims)
    if data.size and data.max() > 1:
        raise FileFormatError(f"{path}: mask payload contains values outside {{0,1}}",
                              field="payload")
    return Mask(data=data.copy())
