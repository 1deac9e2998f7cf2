"""
This module contains tests for the descriptor math.

It includes tests for:
- Cosine distance on identical, orthogonal and antipodal vectors
- Self-attention and cross-attention fusion against explicit matrix oracles
- The lazy quadruplet loss on hand-evaluated fixtures
- Polar histograms and rotation search
- The synthetic descriptor's determinism, aliasing and distance statistics
"""

import math

import numpy as np
import pytest

from .descriptor import (FusionParams, QuadrupletTuple, channel_weights, cosine_distance,
                         cross_attention_fuse, fuse_descriptors, lazy_quadruplet_hinge,
                         lazy_quadruplet_loss, polar_histogram_descriptor,
                         rotation_search_distance, self_attention, synthetic_descriptor)
from .errors import (DimensionMismatch, EmptyCloud, EmptySet, InvalidParameter, LayoutMismatch,
                     ZeroVector)


def explicit_softmax_rows(m):
    out = np.empty_like(m)
    for i, row in enumerate(m):
        e = np.exp(row - row.max())
        out[i] = e / e.sum()
    return out


def test_cosine_distance_reference_values():
    """
    Test the three reference distances 0, 1 and 2 and the error cases.
    """
    f = np.array([1.0, 2.0, 3.0])
    assert cosine_distance(f, f) == pytest.approx(0.0, abs=1e-15)
    assert cosine_distance([1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0)
    assert cosine_distance(f, -f) == pytest.approx(2.0)
    with pytest.raises(ZeroVector):
        cosine_distance([0.0, 0.0], [1.0, 0.0])
    with pytest.raises(DimensionMismatch):
        cosine_distance([1.0, 0.0], [1.0, 0.0, 0.0])


def test_self_attention_identity_and_oracle():
    """
    Test the gamma = 0 identity, the scalar case and a dense softmax oracle.
    """
    rng = np.random.default_rng(0)
    v = rng.normal(size=16)
    assert np.array_equal(self_attention(v, 0.0), v)
    assert self_attention([2.0], 0.3)[0] == pytest.approx(2.6)

    v = np.array([1.0, 0.0, -1.0])
    attention = explicit_softmax_rows(np.outer(v, v))
    expected = v + 0.5 * attention.T @ v
    assert np.allclose(self_attention(v, 0.5), expected, atol=1e-14)


def test_softmax_rows_sum_to_one():
    """
    Test that attention rows are probability vectors.
    """
    from .descriptor import attention_map

    rng = np.random.default_rng(1)
    for _ in range(50):
        rows = attention_map(rng.normal(size=12)).sum(axis=1)
        assert np.all(np.abs(rows - 1.0) <= 1e-12)


def test_cross_attention_zero_input_and_oracle():
    """
    Test the zero-input case and an explicit 4x4 oracle with identity weights.
    """
    params = FusionParams.identity(2)
    assert np.array_equal(cross_attention_fuse([0.0, 0.0], [0.0, 0.0], params), np.zeros(4))
    assert np.allclose(channel_weights(np.zeros(4), params), 0.5)

    v_cat = np.array([1.0, 0.0, 0.0, 1.0])
    energy = np.outer(v_cat, v_cat)
    alpha_corr = energy @ energy.mean(axis=1)
    alpha_w = 1.0 / (1.0 + np.exp(-alpha_corr))
    fused = cross_attention_fuse([1.0, 0.0], [0.0, 1.0], params)
    assert np.allclose(fused, alpha_w * v_cat, atol=1e-15)


def test_channel_weights_stay_open_interval():
    """
    Test that channel weights stay strictly inside (0, 1), even for saturating inputs.
    """
    rng = np.random.default_rng(2)
    params = FusionParams.seeded(8, seed=3, scale=5.0)
    for _ in range(1000):
        v_cat = rng.normal(scale=rng.uniform(0.01, 30.0), size=16)
        alpha = channel_weights(v_cat, params)
        assert np.all(alpha > 0.0) and np.all(alpha < 1.0)
        fused = alpha * v_cat
        nonzero = v_cat != 0
        assert np.all(np.abs(fused[nonzero]) < np.abs(v_cat[nonzero]))


def test_fuse_descriptors_shape_and_norm():
    """
    Test the full fusion path returns a unit vector of twice the branch length.
    """
    rng = np.random.default_rng(4)
    params = FusionParams.seeded(8, seed=5)
    fused = fuse_descriptors(rng.normal(size=8), rng.normal(size=8), params)
    assert fused.shape == (16,)
    assert np.linalg.norm(fused) == pytest.approx(1.0)
    with pytest.raises(DimensionMismatch):
        cross_attention_fuse(np.ones(3), np.ones(4), params)


def test_lazy_quadruplet_fixtures():
    """
    Test the satisfied-margin fixture is 0 and the hand-evaluated fixture is exactly 0.4.
    """
    assert lazy_quadruplet_hinge([0.0, 0.0], [2.0, 2.0], [2.0], 0.5, 0.2) == 0.0
    assert lazy_quadruplet_hinge([0.4], [0.5], [0.4], 0.5, 0.0) == 0.4
    with pytest.raises(EmptySet):
        lazy_quadruplet_hinge([], [0.5], [0.4], 0.5, 0.2)


def test_lazy_quadruplet_loss_scale_invariant():
    """
    Test that scaling every descriptor by a positive constant leaves the loss unchanged.
    """
    rng = np.random.default_rng(6)
    anchor = rng.normal(size=8)
    positives = [anchor + rng.normal(scale=0.1, size=8) for _ in range(2)]
    negatives = [rng.normal(size=8) for _ in range(3)]
    hard = rng.normal(size=8)
    base = lazy_quadruplet_loss(QuadrupletTuple(anchor, positives, negatives, hard))
    scaled = lazy_quadruplet_loss(QuadrupletTuple(3.0 * anchor, [3.0 * p for p in positives],
                                                  [3.0 * n for n in negatives], 3.0 * hard))
    assert scaled == pytest.approx(base, abs=1e-12)
    with pytest.raises(EmptySet):
        lazy_quadruplet_loss(QuadrupletTuple(anchor, [], negatives, hard))


def test_polar_histogram_single_point_and_rotation():
    """
    Test single-point occupancy and that a one-bin rotation rolls the angular axis.
    """
    hist = polar_histogram_descriptor([[1.0, 0.0]], 4, 16, 50.0)
    assert np.count_nonzero(hist) == 1
    assert hist.max() == 1.0

    rng = np.random.default_rng(7)
    cloud = rng.uniform(-40, 40, (300, 2))
    step = 2 * math.pi / 16
    c, s = math.cos(step), math.sin(step)
    rotated = cloud @ np.array([[c, s], [-s, c]])
    ref = polar_histogram_descriptor(cloud, 4, 16, 50.0).reshape(4, 16)
    moved = polar_histogram_descriptor(rotated, 4, 16, 50.0).reshape(4, 16)
    # Points within rounding of a sector edge may land either side.
    assert np.abs(np.roll(ref, 1, axis=1) - moved).sum() < 0.05 * np.abs(ref).sum()
    with pytest.raises(EmptyCloud):
        polar_histogram_descriptor(np.zeros((0, 2)))


def test_polar_histogram_ring_is_uniform():
    """
    Test that a dense ring centred in each sector yields a uniform angular profile.
    """
    angles = -math.pi + (np.arange(160) + 0.5) * 2 * math.pi / 160
    ring = 10.0 * np.column_stack((np.cos(angles), np.sin(angles)))
    hist = polar_histogram_descriptor(ring, 4, 16, 50.0).reshape(4, 16)
    occupied = hist[hist.sum(axis=1) > 0]
    assert occupied.shape[0] == 1
    assert np.ptp(occupied[0]) <= 1e-9


def test_rotation_search_recovers_shift():
    """
    Test exact shift recovery and a noisy half-turn recovered within one bin.
    """
    rng = np.random.default_rng(8)
    ref = rng.uniform(0, 1, (4, 16))
    assert rotation_search_distance(ref.ravel(), ref.ravel(), 16) == pytest.approx((0.0, 0))
    for k in (1, 5, 11):
        d, shift = rotation_search_distance(ref.ravel(), np.roll(ref, k, axis=1).ravel(), 16)
        assert shift == k
        assert d == pytest.approx(0.0, abs=1e-12)
    noisy = np.roll(ref, 8, axis=1) + rng.normal(scale=0.01, size=ref.shape)
    _, shift = rotation_search_distance(ref.ravel(), noisy.ravel(), 16)
    assert abs(shift - 8) <= 1
    with pytest.raises(LayoutMismatch):
        rotation_search_distance(np.ones(64), np.ones(60), 16)


def test_synthetic_descriptor_determinism_and_alias():
    """
    Test determinism, yaw invariance of the base and exact aliasing.
    """
    a = synthetic_descriptor(3, (10.0, 20.0), 0.3, 0.0)
    b = synthetic_descriptor(3, (10.0, 20.0), 0.3, 0.0)
    assert np.array_equal(a, b)
    assert np.array_equal(a, synthetic_descriptor(3, (10.0, 20.0), -2.0, 0.0))
    x = synthetic_descriptor(3, (0.0, 0.0), 0.0, 0.0, alias_group=1)
    y = synthetic_descriptor(3, (5000.0, -700.0), 1.0, 0.0, alias_group=1)
    assert cosine_distance(x, y) == pytest.approx(0.0, abs=1e-12)
    noisy = synthetic_descriptor(3, (10.0, 20.0), 0.3, 0.05)
    assert 0.0 < cosine_distance(a, noisy) < 0.01


def test_synthetic_descriptor_distant_places_are_independent():
    """
    Test that places 1000 m apart sit near cosine distance 1.
    """
    rng = np.random.default_rng(9)
    distances = []
    for _ in range(1000):
        p = rng.uniform(-5000, 5000, 2)
        heading = rng.uniform(-math.pi, math.pi)
        q = p + 1000.0 * np.array([math.cos(heading), math.sin(heading)])
        distances.append(cosine_distance(synthetic_descriptor(11, p, 0.0, 0.0),
                                         synthetic_descriptor(11, q, 0.0, 0.0)))
    distances = np.array(distances)
    assert distances.min() >= 0.4 and distances.max() <= 1.6
    assert 0.95 <= distances.mean() <= 1.05


def test_descriptor_parameter_errors_name_the_module():
    """
    Test that negative noise or attention scale raise InvalidParameter tagged with this module.
    """
    with pytest.raises(InvalidParameter) as noise:
        synthetic_descriptor(3, (0.0, 0.0), 0.0, -0.1)
    assert noise.value.module == "descriptor"
    with pytest.raises(InvalidParameter) as gamma:
        FusionParams.identity(4, gamma=-1.0)
    assert gamma.value.module == "descriptor"
