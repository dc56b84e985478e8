import math

import numpy as np
import pytest

from fragkey.core import ConfigError, ProtocolError, SpeckleSet, make_speckles, seeded_rng
from fragkey.ghost import (
    GhostImagingReconstructor,
    MeasurementConfig,
    block_means,
    block_sums,
    center_weighted_profile,
    downsample_vote,
    measure,
    prefix_unit_scores,
    reconstruct_dg2,
    upsample,
)
from fragkey.binarize import binarize_sort, top_m_mask
from fragkey.patterns import make_regular_pattern


def naive_dg2(buckets, mats):
    """Two-pass covariance, one pixel at a time, with exact sums."""
    n = len(buckets)
    s_mean = math.fsum(buckets) / n
    rows, cols = mats[0].shape
    out = np.empty((rows, cols))
    for r in range(rows):
        for c in range(cols):
            col = [float(m[r, c]) for m in mats]
            i_mean = math.fsum(col) / n
            out[r, c] = math.fsum((s - s_mean) * (i - i_mean) for s, i in zip(buckets, col)) / n
    return out


def test_upsample_identity_and_replication():
    pat = make_regular_pattern("rhombus", 8, 8)
    assert np.array_equal(upsample(pat, 1), pat)
    assert np.array_equal(upsample(np.ones((1, 1), dtype=np.uint8), 8), np.ones((8, 8)))
    big = upsample(pat, 8)
    assert big.shape == (64, 64)
    assert np.array_equal(block_means(big, 8), pat)
    assert np.array_equal(downsample_vote(big, 8), pat)


def test_block_means_arithmetic():
    img = np.array([[1.0, 3.0], [5.0, 7.0]])
    assert block_means(img, 2).tolist() == [[4.0]]
    assert np.array_equal(block_means(img, 1), img)
    with pytest.raises(ConfigError):
        block_means(np.zeros((3, 4)), 2)


@pytest.mark.parametrize("c", [0.0, 1.0, -2.5, 1e6])
def test_block_means_invert_scaled_upsample(c):
    pat = make_regular_pattern("cross", 6, 4)
    assert np.allclose(block_means(upsample(pat, 3) * c, 3), pat * c, rtol=0, atol=1e-12 * max(1, abs(c)))


def test_measure_empty_object():
    sp = make_speckles(10, (4, 4), seed=1)
    out = measure(np.zeros((4, 4)), sp, MeasurementConfig(10))
    assert np.array_equal(out, np.zeros(10))


def test_measure_full_object_is_popcount():
    sp = make_speckles(25, (4, 4), seed=2)
    out = measure(np.ones((4, 4)), sp, MeasurementConfig(25))
    assert np.array_equal(out, sp.matrices.sum(axis=(1, 2)))


def test_measure_matches_brute_force():
    sp = make_speckles(10, (4, 4), seed=3)
    obj = np.zeros((4, 4))
    obj[0, 1] = obj[2, 2] = obj[3, 0] = 1
    expected = [sum(int(m[r, c]) * obj[r, c] for r in range(4) for c in range(4)) for m in sp.matrices]
    assert measure(obj, sp, MeasurementConfig(10)).tolist() == expected


def test_measure_with_profile_matches_brute_force():
    sp = make_speckles(6, (4, 4), seed=4)
    prof = center_weighted_profile((4, 4), 2.0)
    obj = np.zeros((4, 4))
    obj[1:3, 1:3] = 1
    expected = [math.fsum(prof[r, c] * m[r, c] * obj[r, c] for r in range(4) for c in range(4)) for m in sp.matrices]
    got = measure(obj, sp, MeasurementConfig(6, source_profile=prof))
    assert np.allclose(got, expected, rtol=1e-14)


def test_measure_noise_is_seeded_and_clamped():
    sp = make_speckles(200, (4, 4), seed=5)
    cfg = MeasurementConfig(200, noise_sigma=0.5)
    a = measure(np.ones((4, 4)), sp, cfg, seeded_rng(1))
    b = measure(np.ones((4, 4)), sp, cfg, seeded_rng(1))
    assert np.array_equal(a, b)
    assert (a >= 0).all()
    assert not np.array_equal(a, measure(np.ones((4, 4)), sp, MeasurementConfig(200)))
    with pytest.raises(ConfigError):
        measure(np.ones((4, 4)), sp, cfg)


def test_measure_dimension_mismatch():
    sp = make_speckles(4, (4, 4), seed=5)
    with pytest.raises(ConfigError):
        measure(np.ones((4, 5)), sp, MeasurementConfig(4))
    with pytest.raises(ConfigError):
        measure(np.ones((4, 4)), sp, MeasurementConfig(5))


def test_measurement_config_validation():
    with pytest.raises(ConfigError):
        MeasurementConfig(1)
    with pytest.raises(ConfigError):
        MeasurementConfig(10, noise_sigma=-1)
    with pytest.raises(ConfigError):
        MeasurementConfig(10, source_profile=np.zeros((2, 2)))
    with pytest.raises(ConfigError):
        MeasurementConfig(10, nu=0)


def test_constant_buckets_give_zero_image():
    sp = make_speckles(16, (3, 3), seed=1)
    assert np.array_equal(reconstruct_dg2(np.full(16, 0.1), sp), np.zeros((3, 3)))


def test_two_sample_hand_computed():
    sp = SpeckleSet(np.array([[[1, 0]], [[0, 1]]]))
    assert reconstruct_dg2([1.0, 0.0], sp).tolist() == [[0.25, -0.25]]


def test_length_mismatch_is_protocol_error():
    sp = make_speckles(8, (2, 2), seed=1)
    with pytest.raises(ProtocolError):
        reconstruct_dg2(np.arange(7.0), sp)


def test_reconstruction_matches_naive_oracle():
    rng = seeded_rng(100)
    for trial in range(10):
        sp = make_speckles(64, (8, 8), seed=trial)
        buckets = rng.random(64) * 40
        fast = reconstruct_dg2(buckets, sp)
        slow = naive_dg2(buckets, sp.matrices)
        assert np.max(np.abs(fast - slow)) / np.max(np.abs(slow)) < 1e-12


def test_bright_units_outrank_dark_when_oversampled():
    pat = make_regular_pattern("rhombus", 4, 4, "3:1")
    for seed in range(5):
        sp = make_speckles(1600, (16, 16), seed=seed)
        buckets = measure(upsample(pat, 4), sp, MeasurementConfig(1600))
        means = block_means(reconstruct_dg2(buckets, sp), 4)
        assert means[pat == 1].min() > means[pat == 0].max()


def test_prefix_scores_rank_like_full_pipeline():
    nu = 4
    pat = make_regular_pattern("rhombus", 4, 4, "13:3")
    sp = make_speckles(300, (16, 16), seed=8)
    buckets = measure(upsample(pat, nu), sp, MeasurementConfig(300))
    counts = block_sums(sp.matrices, nu).reshape(300, 16)
    lengths = [20, 77, 150, 300]
    scores = prefix_unit_scores(buckets, counts, lengths)
    for k, n in enumerate(lengths):
        ref = block_means(reconstruct_dg2(buckets[:n], sp.head(n)), nu)
        assert np.allclose(scores[k] / (n * n * nu * nu), ref.ravel(), rtol=0, atol=1e-9)
        assert np.array_equal(
            top_m_mask(scores[k].reshape(4, 4), 3), binarize_sort(reconstruct_dg2(buckets[:n], sp.head(n)), nu, 3)
        )


def test_center_profile_normalized():
    prof = center_weighted_profile((16, 16), 2.0)
    assert prof.mean() == pytest.approx(1.0)
    assert prof[7, 7] > prof[0, 0]
    assert np.allclose(center_weighted_profile((4, 4), 0.0), 1.0)


def test_reconstructor_estimator_api():
    sp = make_speckles(64, (8, 8), seed=1)
    buckets = np.vstack([seeded_rng(i).random(64) for i in range(3)])
    est = GhostImagingReconstructor(upsample=2).fit(sp)
    images = est.transform(buckets)
    assert images.shape == (3, 8, 8)
    assert np.array_equal(images[1], reconstruct_dg2(buckets[1], sp))
    assert np.array_equal(est.transform(buckets[0]), images[0])
    pooled = GhostImagingReconstructor(upsample=2, pool=True).fit(sp.matrices).transform(buckets)
    assert pooled.shape == (3, 4, 4)
    assert est.get_params() == {"pool": False, "upsample": 2}


def test_reconstructor_requires_fit():
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        GhostImagingReconstructor().transform(np.ones((1, 4)))
