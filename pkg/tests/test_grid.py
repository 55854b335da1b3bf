from __future__ import annotations

import json
import math
import tempfile

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seedgrow.errors import DimensionMismatch, FileFormatError
from seedgrow.grid import (
    LN2,
    EntropyField,
    Mask,
    ProbabilityField,
    Volume,
    VoxelIndex,
    binary_entropy,
    dice_loss,
    entropy_map,
    local_mean_std,
    mask_l1_diff,
    neighbourhood_std,
    neighbourhood_std_field,
    read_mask,
    read_volume,
    write_mask,
    write_volume,
)
from seedgrow.rng import rng_from_seed


# ---------------------------------------------------------------------------
# Dice loss
# ---------------------------------------------------------------------------

def test_dice_identity_is_zero():
    m = Mask.zeros((4, 4, 4))
    m.data[1:3, 1:3, 1:3] = 1
    assert dice_loss(m, m) < 1e-6


def test_dice_disjoint_is_one():
    a = Mask.zeros((4, 4, 4))
    b = Mask.zeros((4, 4, 4))
    a.data[0, 0, 0] = 1
    b.data[3, 3, 3] = 1
    # 1 - eps/(|a|+|b|+eps)
    assert dice_loss(a, b) == pytest.approx(1.0, abs=1e-6)


def test_dice_half_overlap_block():
    # 2x2x2 block vs the same block shifted by one along c: overlap 4 of 8.
    # Hand count: sum(p*t)=4, sum(p)=8, sum(t)=8 -> 1 - 8/16 = 0.5.
    a = Mask.zeros((4, 4, 4))
    b = Mask.zeros((4, 4, 4))
    a.data[0:2, 0:2, 0:2] = 1
    b.data[0:2, 0:2, 1:3] = 1
    assert dice_loss(a, b) == pytest.approx(0.5, abs=1e-6)


def test_dice_empty_vs_empty_is_zero():
    a = Mask.zeros((3, 3, 3))
    assert dice_loss(a, a) == 0.0


def test_dice_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        dice_loss(Mask.zeros((3, 3, 3)), Mask.zeros((3, 3, 4)))


def test_dice_accepts_soft_pred():
    t = Mask.zeros((2, 2, 2))
    t.data[:] = 1
    p = ProbabilityField(np.full((2, 2, 2), 0.5))
    # sum(p*t)=4, sum(p)=4, sum(t)=8 -> 1 - 8/12
    assert dice_loss(p, t) == pytest.approx(1.0 - 8.0 / 12.0, abs=1e-6)


@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=30, deadline=None)
def test_dice_symmetric_and_bounded_on_binary(seed):
    rng = rng_from_seed(seed)
    a = Mask((rng.random((5, 5, 5)) < 0.4).astype(np.uint8))
    b = Mask((rng.random((5, 5, 5)) < 0.4).astype(np.uint8))
    lab = dice_loss(a, b)
    lba = dice_loss(b, a)
    assert lab == pytest.approx(lba, abs=1e-12)
    assert 0.0 <= lab <= 1.0
    if a.count():
        assert dice_loss(a, a) <= 1e-6


# ---------------------------------------------------------------------------
# Entropy map
# ---------------------------------------------------------------------------

def test_entropy_maximum_at_half():
    e = entropy_map(np.full((1, 1, 1), 0.5))
    assert e.data[0, 0, 0] == pytest.approx(LN2, abs=1e-12)


def test_entropy_zero_at_endpoints():
    p = np.zeros((1, 1, 2))
    p[0, 0, 1] = 1.0
    e = entropy_map(p)
    assert e.data[0, 0, 0] == 0.0
    assert e.data[0, 0, 1] == 0.0


def test_entropy_point_nine():
    # direct evaluation of the formula
    expected = -(0.9 * math.log(0.9) + 0.1 * math.log(0.1))
    e = entropy_map(np.full((1, 1, 1), 0.9))
    assert e.data[0, 0, 0] == pytest.approx(expected, abs=1e-12)
    assert e.data[0, 0, 0] == pytest.approx(0.3251, abs=1e-4)


def test_entropy_symmetry_voxelwise():
    p = np.linspace(0.0, 1.0, 101).reshape(101, 1, 1)
    e1 = entropy_map(p).data
    e2 = entropy_map(1.0 - p).data
    np.testing.assert_allclose(e1, e2[::-1], atol=1e-12)
    np.testing.assert_allclose(e1, e2, atol=1e-12)


def test_entropy_strictly_decreasing_away_from_half():
    # monotone grid of p values on one side of 0.5
    p = np.linspace(0.5, 1.0, 200)
    e = binary_entropy(p)
    assert np.all(np.diff(e) < 0)
    assert e.argmax() == 0


def test_probability_field_rejects_out_of_range():
    with pytest.raises(ValueError):
        ProbabilityField(np.full((2, 2, 2), 1.5))


def test_entropy_field_rejects_out_of_range():
    with pytest.raises(ValueError):
        EntropyField(np.full((2, 2, 2), 1.0))


# ---------------------------------------------------------------------------
# Neighbourhood std
# ---------------------------------------------------------------------------

def test_std_constant_volume_is_zero():
    vol = Volume(np.full((1, 5, 5, 5), 0.7, dtype=np.float32))
    assert neighbourhood_std(vol, (2, 2, 2), (1, 1, 1)) == 0.0
    assert neighbourhood_std(vol, (0, 0, 0), (2, 2, 2)) == 0.0


def test_std_edge_clipped_window():
    # corner voxel (0,0,0) with radius (1,1,0) on a 2x2x1 grid sees
    # exactly the values {0,0,1,1}: population std = 0.5
    data = np.zeros((1, 2, 2, 1), dtype=np.float32)
    data[0, 1, :, 0] = 1.0
    vol = Volume(data)
    assert neighbourhood_std(vol, (0, 0, 0), (1, 1, 0)) == pytest.approx(0.5, abs=1e-12)


def test_std_zero_radius():
    rng = rng_from_seed(3)
    vol = Volume(rng.random((2, 4, 4, 4), dtype=np.float32))
    assert neighbourhood_std(vol, (1, 2, 3), (0, 0, 0)) == 0.0


def test_std_field_matches_direct():
    rng = rng_from_seed(11)
    vol = Volume(rng.random((2, 6, 5, 7), dtype=np.float32))
    for radius in [(1, 1, 1), (2, 1, 3), (0, 0, 0)]:
        field = neighbourhood_std_field(vol, radius)
        for v in [(0, 0, 0), (5, 4, 6), (3, 2, 4), (1, 0, 6)]:
            assert field[v] == pytest.approx(
                neighbourhood_std(vol, v, radius), abs=1e-9)


@given(st.integers(0, 2 ** 32 - 1), st.floats(-5, 5), st.floats(0.1, 4))
@settings(max_examples=25, deadline=None)
def test_std_shift_and_scale_invariance(seed, shift, scale):
    rng = rng_from_seed(seed)
    base = rng.random((1, 4, 4, 4), dtype=np.float32)
    v = (2, 1, 3)
    r = (1, 1, 1)
    s0 = neighbourhood_std(Volume(base), v, r)
    s_shift = neighbourhood_std(Volume(base + np.float32(shift)), v, r)
    s_scale = neighbourhood_std(Volume(base * np.float32(scale)), v, r)
    assert s_shift == pytest.approx(s0, abs=1e-6)
    assert s_scale == pytest.approx(scale * s0, rel=1e-5, abs=1e-6)


def test_local_mean_std_against_loops():
    rng = rng_from_seed(42)
    ch = rng.random((5, 4, 6))
    mean, std = local_mean_std(ch, (1, 2, 1))
    # brute-force reference
    for a in range(5):
        for b in range(4):
            for c in range(6):
                w = ch[max(0, a - 1):a + 2, max(0, b - 2):b + 3, max(0, c - 1):c + 2]
                assert mean[a, b, c] == pytest.approx(w.mean(), abs=1e-10)
                assert std[a, b, c] == pytest.approx(w.std(), abs=1e-10)


def test_std_out_of_bounds_voxel():
    vol = Volume(np.zeros((1, 3, 3, 3), dtype=np.float32))
    with pytest.raises(DimensionMismatch):
        neighbourhood_std(vol, (3, 0, 0), (1, 1, 1))


# ---------------------------------------------------------------------------
# Mask L1 diff
# ---------------------------------------------------------------------------

def test_l1_diff_identical():
    m = Mask.from_voxels((3, 3, 3), [(0, 1, 2), (1, 1, 1)])
    assert mask_l1_diff(m, m) == 0


def test_l1_diff_counts_set_voxels():
    a = Mask.zeros((3, 3, 3))
    b = Mask.from_voxels((3, 3, 3), [(0, 0, 0), (1, 1, 1), (2, 2, 2)])
    assert mask_l1_diff(a, b) == 3


def test_l1_diff_symmetric_difference():
    a = Mask.from_voxels((2, 2, 2), [(0, 0, 0)])
    b = Mask.from_voxels((2, 2, 2), [(0, 0, 1)])
    assert mask_l1_diff(a, b) == 2


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

def test_volume_rejects_nonfinite():
    bad = np.zeros((1, 2, 2, 2), dtype=np.float32)
    bad[0, 0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        Volume(bad)


def test_volume_rejects_bad_spacing():
    with pytest.raises(ValueError):
        Volume(np.zeros((1, 2, 2, 2), dtype=np.float32), spacing_mm=(1.0, 0.0, 1.0))


def test_mask_rejects_values_outside_binary():
    with pytest.raises(ValueError):
        Mask(np.full((2, 2, 2), 2, dtype=np.uint8))


def test_voxel_index_is_tuple_like():
    v = VoxelIndex(1, 2, 3)
    assert tuple(v) == (1, 2, 3)
    assert v.a == 1 and v.b == 2 and v.c == 3


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=20, deadline=None)
def test_volume_round_trip(seed):
    rng = rng_from_seed(seed)
    dims = tuple(int(d) for d in rng.integers(1, 7, size=3))
    ch = int(rng.integers(1, 4))
    vol = Volume(rng.random((ch, *dims), dtype=np.float32),
                 spacing_mm=tuple(float(s) for s in rng.uniform(0.2, 3.0, size=3)))
    with tempfile.TemporaryDirectory() as tmp:
        path = f"{tmp}/v.svf"
        write_volume(vol, path)
        back = read_volume(path)
    assert back.dims == vol.dims and back.channels == vol.channels
    assert np.array_equal(back.data, vol.data)
    assert back.spacing_mm == pytest.approx(vol.spacing_mm)


@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=20, deadline=None)
def test_mask_round_trip(seed):
    rng = rng_from_seed(seed)
    dims = tuple(int(d) for d in rng.integers(1, 7, size=3))
    mask = Mask((rng.random(dims) < 0.5).astype(np.uint8))
    with tempfile.TemporaryDirectory() as tmp:
        path = f"{tmp}/m.svm"
        write_mask(mask, path)
        back = read_mask(path)
    assert np.array_equal(back.data, mask.data)


def test_read_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.svf"
    path.write_bytes(b'{"magic":"NOPE","dims":[1,1,1]}\n\x00\x00\x00\x00')
    with pytest.raises(FileFormatError) as ei:
        read_volume(path)
    assert ei.value.field == "magic"


def test_read_rejects_bad_dims(tmp_path):
    path = tmp_path / "bad.svf"
    path.write_bytes(b'{"magic":"SVF1","dims":[1,-1,1],"channels":1,'
                     b'"spacing_mm":[1,1,1],"dtype":"f32le"}\n')
    with pytest.raises(FileFormatError) as ei:
        read_volume(path)
    assert ei.value.field == "dims"


def test_read_rejects_unknown_dtype(tmp_path):
    path = tmp_path / "bad.svf"
    path.write_bytes(b'{"magic":"SVF1","dims":[1,1,1],"channels":1,'
                     b'"spacing_mm":[1,1,1],"dtype":"f64le"}\n' + b"\x00" * 8)
    with pytest.raises(FileFormatError) as ei:
        read_volume(path)
    assert ei.value.field == "dtype"


def test_read_rejects_payload_mismatch(tmp_path):
    path = tmp_path / "bad.svf"
    path.write_bytes(b'{"magic":"SVF1","dims":[2,2,2],"channels":1,'
                     b'"spacing_mm":[1,1,1],"dtype":"f32le"}\n' + b"\x00" * 4)
    with pytest.raises(FileFormatError) as ei:
        read_volume(path)
    assert ei.value.field == "payload"


def test_read_rejects_garbage_header(tmp_path):
    path = tmp_path / "bad.svf"
    path.write_bytes(b"not json at all\n")
    with pytest.raises(FileFormatError) as ei:
        read_volume(path)
    assert ei.value.field == "header"


def test_mask_read_rejects_nonbinary_payload(tmp_path):
    path = tmp_path / "bad.svm"
    path.write_bytes(b'{"magic":"SVF1","dims":[1,1,2],"channels":1,'
                     b'"spacing_mm":[1,1,1],"dtype":"u8"}\n' + bytes([0, 7]))
    with pytest.raises(FileFormatError) as ei:
        read_mask(path)
    assert ei.value.field == "payload"


def test_header_is_single_json_line(tmp_path):
    vol = Volume(np.zeros((1, 2, 2, 2), dtype=np.float32))
    path = tmp_path / "v.svf"
    write_volume(vol, path)
    first = path.read_bytes().split(b"\n", 1)[0]
    header = json.loads(first)
    assert header["magic"] == "SVF1"
    assert header["dims"] == [2, 2, 2]
    assert header["dtype"] == "f32le"
