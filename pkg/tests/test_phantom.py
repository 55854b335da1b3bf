from __future__ import annotations

import numpy as np
import pytest

from seedgrow.errors import DataError
from seedgrow.phantom import (
    PhantomSpec,
    chebyshev_distance_to_mask,
    generate,
    sample_perturbed_seed,
    sample_seed_in_gland,
    sample_seed_in_lesion,
)


def test_zero_lesions_gives_empty_truth():
    sample = generate(PhantomSpec(lesion_count=0, rng_seed=5))
    assert sample.truth.count() == 0
    assert sample.gland.count() > 0


def test_determinism_bit_identical():
    spec = PhantomSpec(rng_seed=123, lesion_count=2, lesion_radius_range=(3, 5),
                       noise_std=0.03)
    s1 = generate(spec)
    s2 = generate(spec)
    assert np.array_equal(s1.volume.data, s2.volume.data)
    assert np.array_equal(s1.truth.data, s2.truth.data)
    assert np.array_equal(s1.gland.data, s2.gland.data)
    assert s1.lesion_centres == s2.lesion_centres


def test_different_seeds_differ():
    a = generate(PhantomSpec(rng_seed=1))
    b = generate(PhantomSpec(rng_seed=2))
    assert not np.array_equal(a.volume.data, b.volume.data)


def test_noiseless_contrast_margin():
    # contrast 0.5, zero heterogeneity and noise: every lesion voxel's
    # channel-0 intensity beats every background voxel's by >= 0.4
    spec = PhantomSpec(lesion_contrast=0.5, heterogeneity=0.0, noise_std=0.0, rng_seed=7)
    sample = generate(spec)
    ch0 = sample.volume.data[0]
    inside = ch0[sample.truth.bool()]
    outside = ch0[~sample.truth.bool()]
    assert inside.min() - outside.max() >= 0.4


def test_lesions_inside_gland_and_grid():
    for seed in range(8):
        sample = generate(PhantomSpec(rng_seed=seed, lesion_count=2,
                                      lesion_radius_range=(3, 5)))
        t = sample.truth.bool()
        g = sample.gland.bool()
        assert not (t & ~g).any()
        for centre in sample.lesion_centres:
            assert sample.truth.data[tuple(centre)] == 1


def test_volume_intensities_in_unit_range():
    sample = generate(PhantomSpec(rng_seed=3, noise_std=0.1))
    assert sample.volume.data.min() >= 0.0
    assert sample.volume.data.max() <= 1.0


def test_unplaceable_lesion_raises():
    with pytest.raises(DataError):
        generate(PhantomSpec(dims=(8, 8, 8), lesion_radius_range=(3, 3), rng_seed=0))


def test_invalid_radius_range_raises():
    with pytest.raises(DataError):
        PhantomSpec(lesion_radius_range=(5, 3))


def test_seed_in_lesion_always_inside():
    sample = generate(PhantomSpec(rng_seed=11))
    for k in range(1000):
        v = sample_seed_in_lesion(sample, rng_seed=k)
        assert sample.truth.data[tuple(v)] == 1


def test_seed_in_lesion_empty_truth_raises():
    sample = generate(PhantomSpec(lesion_count=0, rng_seed=1))
    with pytest.raises(DataError) as ei:
        sample_seed_in_lesion(sample, rng_seed=0)
    assert "sample_seed_in_gland" in str(ei.value)


def test_perturbed_seed_outside_within_band():
    sample = generate(PhantomSpec(rng_seed=21))
    dist = chebyshev_distance_to_mask(sample.truth)
    max_offset = 4
    for k in range(1000):
        v = sample_perturbed_seed(sample, max_offset, rng_seed=k)
        assert sample.truth.data[tuple(v)] == 0
        assert 1 <= dist[tuple(v)] <= max_offset


def test_seed_in_gland_always_inside():
    sample = generate(PhantomSpec(lesion_count=0, rng_seed=9))
    for k in range(200):
        v = sample_seed_in_gland(sample, rng_seed=k)
        assert sample.gland.data[tuple(v)] == 1


def test_seed_sampling_deterministic():
    sample = generate(PhantomSpec(rng_seed=2))
    assert sample_seed_in_lesion(sample, 77) == sample_seed_in_lesion(sample, 77)
    assert sample_perturbed_seed(sample, 3, 77) == sample_perturbed_seed(sample, 3, 77)
