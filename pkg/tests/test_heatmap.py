import math

import numpy as np
import pytest

from fetaug.errors import DataError, ParameterError, ShapeError
from fetaug.heatmap import (
    EPSILON,
    KEYPOINT_NAMES,
    HeatmapStack,
    KeypointSet,
    extract,
    mse,
    refine_centroid,
    refinement_radius,
    synthesize,
)


def single_visible(name: str, pos) -> KeypointSet:
    positions = np.zeros((15, 3))
    visible = np.zeros(15, dtype=bool)
    i = KEYPOINT_NAMES.index(name)
    positions[i] = pos
    visible[i] = True
    return KeypointSet(positions, visible)


def centroid_oracle(channel, peak, radius=1):
    """Direct scalar evaluation of the windowed centroid formula."""
    num = np.zeros(3)
    den = EPSILON
    offsets = range(-radius, radius + 1)
    for dx in offsets:
        for dy in offsets:
            for dz in offsets:
                u = (peak[0] + dx, peak[1] + dy, peak[2] + dz)
                if any(c < 0 or c >= n for c, n in zip(u, channel.shape)):
                    continue
                w = float(channel[u])
                den += w
                num += np.array(u, dtype=np.float64) * w
    return num / den


# ---------------------------------------------------------------------------
# synthesize
# ---------------------------------------------------------------------------


def test_synthesize_peak_value_one():
    kps = single_visible("bladder", (32, 32, 32))
    hm = synthesize(kps, (64, 64, 64), sigma_vox=2.0)
    i = KEYPOINT_NAMES.index("bladder")
    assert hm.data[i, 32, 32, 32] == pytest.approx(1.0, abs=1e-7)


def test_synthesize_analytic_value_two_voxels_out():
    kps = single_visible("bladder", (32, 32, 32))
    hm = synthesize(kps, (64, 64, 64), sigma_vox=2.0)
    i = KEYPOINT_NAMES.index("bladder")
    assert hm.data[i, 34, 32, 32] == pytest.approx(math.exp(-0.5), abs=1e-6)


def test_synthesize_halfway_symmetry():
    kps = single_visible("bladder", (32.5, 32, 32))
    hm = synthesize(kps, (64, 64, 64), sigma_vox=2.0)
    i = KEYPOINT_NAMES.index("bladder")
    expected = math.exp(-0.03125)
    assert hm.data[i, 32, 32, 32] == pytest.approx(expected, abs=1e-6)
    assert hm.data[i, 33, 32, 32] == pytest.approx(expected, abs=1e-6)


def test_synthesize_invisible_channel_zero():
    kps = single_visible("bladder", (32, 32, 32))
    hm = synthesize(kps, (32, 32, 32), sigma_vox=2.0)
    j = KEYPOINT_NAMES.index("ankle_R")
    assert not hm.valid[j]
    assert not hm.data[j].any()


def test_synthesize_max_equals_nearest_center_distance(rng):
    for _ in range(20):
        pos = rng.uniform(5, 26, size=3)
        sigma = rng.uniform(1.0, 4.0)
        hm = synthesize(single_visible("bladder", pos), (32, 32, 32), sigma)
        d2 = np.sum((np.round(pos) - pos) ** 2)
        i = KEYPOINT_NAMES.index("bladder")
        assert hm.data[i].max() == pytest.approx(math.exp(-d2 / (2 * sigma**2)), rel=1e-5)


def test_synthesize_rejects_bad_sigma():
    kps = single_visible("bladder", (1, 1, 1))
    for bad in (0.0, -1.0, math.nan):
        with pytest.raises(ParameterError):
            synthesize(kps, (8, 8, 8), bad)


# ---------------------------------------------------------------------------
# extract
# ---------------------------------------------------------------------------


def test_extract_delta():
    data = np.zeros((15, 24, 24, 24), dtype=np.float32)
    i = KEYPOINT_NAMES.index("knee_L")
    data[i, 10, 12, 8] = 1.0
    valid = np.zeros(15, dtype=bool)
    valid[i] = True
    hm = HeatmapStack(data, 2.0, valid)
    kps = extract(hm)
    assert kps.visible[i]
    assert np.allclose(kps.positions[i], (10, 12, 8))


def test_extract_integer_center_exact():
    kps = single_visible("bladder", (32, 32, 32))
    out = extract(synthesize(kps, (64, 64, 64), 2.0))
    i = KEYPOINT_NAMES.index("bladder")
    assert np.allclose(out.positions[i], (32, 32, 32), atol=1e-12)


def test_extract_subvoxel_matches_formula_oracle():
    kps = single_visible("bladder", (32.3, 32, 32))
    hm = synthesize(kps, (64, 64, 64), 2.0)
    i = KEYPOINT_NAMES.index("bladder")
    out = extract(hm)
    assert np.linalg.norm(out.positions[i] - np.array([32.3, 32, 32])) <= 0.2
    oracle = centroid_oracle(hm.data[i], (32, 32, 32), radius=refinement_radius(2.0))
    assert np.abs(out.positions[i] - oracle).max() < 1e-12


def test_refine_radius1_matches_27_term_oracle(rng):
    for trial in range(50):
        channel = rng.uniform(0, 1, size=(7, 7, 7)).astype(np.float32)
        peak = np.unravel_index(np.argmax(channel), channel.shape)
        got = refine_centroid(channel, peak, radius=1)
        want = centroid_oracle(channel, peak, radius=1)
        assert np.abs(got - want).max() < 1e-9


def test_refine_wide_window_matches_oracle(rng):
    for radius in (2, 4):
        channel = rng.uniform(0, 1, size=(11, 10, 9)).astype(np.float32)
        peak = np.unravel_index(np.argmax(channel), channel.shape)
        got = refine_centroid(channel, peak, radius=radius)
        want = centroid_oracle(channel, peak, radius=radius)
        assert np.abs(got - want).max() < 1e-9


def test_extract_on_27_voxel_patch_is_paper_formula(rng):
    # A hand-built 3x3x3 neighborhood patch with its peak at the center:
    # the grid truncates any window radius to exactly the 27-term
    # weighted-centroid formula around the argmax.
    for _ in range(25):
        patch = rng.uniform(0, 1, size=(3, 3, 3)).astype(np.float32)
        patch[1, 1, 1] = patch.max() + rng.uniform(0.1, 1.0)
        data = np.zeros((15, 3, 3, 3), dtype=np.float32)
        data[0] = patch
        valid = np.zeros(15, dtype=bool)
        valid[0] = True
        hm = HeatmapStack(data, 2.0, valid)
        out = extract(hm)
        want = centroid_oracle(patch, (1, 1, 1), radius=1)
        assert np.abs(out.positions[0] - want).max() < 1e-9


def test_extract_boundary_truncation_matches_oracle(rng):
    channel = rng.uniform(0.1, 1.0, size=(5, 5, 5)).astype(np.float32)
    channel[0, 0, 0] = 5.0  # peak at the corner
    got = refine_centroid(channel, (0, 0, 0), radius=1)
    want = centroid_oracle(channel, (0, 0, 0), radius=1)
    assert np.abs(got - want).max() < 1e-12


def test_extract_argmax_tie_lowest_linear_index():
    data = np.zeros((15, 8, 8, 8), dtype=np.float32)
    i = KEYPOINT_NAMES.index("bladder")
    data[i, 2, 3, 4] = 1.0
    data[i, 6, 1, 1] = 1.0  # higher linear index in C order
    # sigma 0.3 -> radius-1 window, so the other tied peak stays outside.
    hm = HeatmapStack(data, 0.3, np.eye(15, dtype=bool)[i] > 0)
    out = extract(hm)
    assert np.allclose(out.positions[i], (2, 3, 4))


def test_extract_translation_equivariance(rng):
    kps = single_visible("bladder", (20.37, 21.9, 19.1))
    hm = synthesize(kps, (48, 48, 48), 2.0)
    i = KEYPOINT_NAMES.index("bladder")
    shifted = np.roll(hm.data[i], (3, -2, 4), axis=(0, 1, 2))
    hm2 = HeatmapStack(
        np.where(np.arange(15)[:, None, None, None] == i, shifted, hm.data), 2.0, hm.valid
    )
    a = extract(hm).positions[i]
    b = extract(hm2).positions[i]
    assert np.allclose(b - a, (3, -2, 4), atol=1e-9)


def test_extract_positive_rescale_invariance():
    kps = single_visible("bladder", (15.6, 14.2, 16.8))
    hm = synthesize(kps, (32, 32, 32), 2.0)
    scaled = HeatmapStack(hm.data * 7.5, 2.0, hm.valid)
    i = KEYPOINT_NAMES.index("bladder")
    a = extract(hm).positions[i]
    b = extract(scaled).positions[i]
    assert np.abs(a - b).max() < 1e-6


def test_extract_all_nan_channel_errors():
    data = np.full((15, 8, 8, 8), np.nan, dtype=np.float32)
    hm = HeatmapStack(data, 2.0, np.ones(15, dtype=bool))
    with pytest.raises(DataError):
        extract(hm)


def test_roundtrip_random_keypoints(rng):
    worst = 0.0
    for _ in range(100):
        sigma = rng.uniform(1.0, 4.0)
        margin = 3.0 * sigma
        pos = rng.uniform(margin, 63 - margin, size=3)
        out = extract(synthesize(single_visible("bladder", pos), (64, 64, 64), sigma))
        err = np.linalg.norm(out.positions[KEYPOINT_NAMES.index("bladder")] - pos)
        worst = max(worst, err)
    assert worst <= 0.25


# ---------------------------------------------------------------------------
# mse
# ---------------------------------------------------------------------------


def test_mse_identical_zero(rng):
    kps = single_visible("bladder", (10, 10, 10))
    hm = synthesize(kps, (24, 24, 24), 2.0)
    assert mse(hm, hm) == 0.0


def test_mse_constant_offset():
    kps = single_visible("bladder", (10, 10, 10))
    gt = synthesize(kps, (24, 24, 24), 2.0)
    pred = HeatmapStack(gt.data + 0.5, 2.0, gt.valid)
    assert mse(pred, gt) == pytest.approx(0.25, rel=1e-6)


def test_mse_matches_scalar_oracle(rng):
    dims = (6, 5, 4)
    gt_data = rng.uniform(0, 1, size=(15, *dims)).astype(np.float32)
    pred_data = rng.uniform(0, 1, size=(15, *dims)).astype(np.float32)
    valid = rng.random(15) < 0.7
    valid[0] = True
    gt = HeatmapStack(gt_data, 2.0, valid)
    pred = HeatmapStack(pred_data, 2.0, valid)
    total = 0.0
    count = 0
    for i in range(15):
        if not valid[i]:
            continue
        for x in range(dims[0]):
            for y in range(dims[1]):
                for z in range(dims[2]):
                    d = float(pred_data[i, x, y, z]) - float(gt_data[i, x, y, z])
                    total += d * d
                    count += 1
    assert mse(pred, gt) == pytest.approx(total / count, rel=1e-7)


def test_mse_shape_mismatch():
    a = HeatmapStack(np.zeros((15, 4, 4, 4), dtype=np.float32), 2.0, np.ones(15, dtype=bool))
    b = HeatmapStack(np.zeros((15, 4, 4, 5), dtype=np.float32), 2.0, np.ones(15, dtype=bool))
    with pytest.raises(ShapeError):
        mse(a, b)


# ---------------------------------------------------------------------------
# KeypointSet plumbing
# ---------------------------------------------------------------------------


def test_keypoint_table_roundtrip(rng):
    pos = rng.uniform(0, 50, size=(15, 3))
    vis = rng.random(15) < 0.8
    kps = KeypointSet(pos, vis)
    back = KeypointSet.from_table(kps.to_table())
    assert np.array_equal(back.positions, kps.positions)
    assert np.array_equal(back.visible, kps.visible)


def test_keypoint_dict_roundtrip(rng):
    pos = rng.uniform(0, 50, size=(15, 3))
    kps = KeypointSet(pos, np.ones(15, dtype=bool))
    back = KeypointSet.from_dict(kps.to_dict())
    assert np.array_equal(back.positions, kps.positions)


def test_keypoint_set_shape_checks():
    with pytest.raises(ShapeError):
        KeypointSet(np.zeros((14, 3)), np.ones(14, dtype=bool))
