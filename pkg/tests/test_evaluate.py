import math

import numpy as np
import pytest

from fetaug.errors import DataError, ParameterError
from fetaug.evaluate import (
    AcquisitionSeries,
    EvalReport,
    ga_binned_stats,
    group_stats,
    keypoint_distance_mm,
    pck,
    pck_curve,
    series_from_pairs,
)
from fetaug.heatmap import KEYPOINT_NAMES, MERGED_NAMES, MERGED_OF, KeypointSet


def kps_at(positions, visible=None):
    pos = np.asarray(positions, dtype=np.float64)
    vis = np.ones(15, dtype=bool) if visible is None else np.asarray(visible, dtype=bool)
    return KeypointSet(pos, vis)


def random_series(rng, acq_id="a", frames=4, spacing=(1.0, 1.0, 1.0), sigma=4.0, ga=None,
                  pred_visible_p=0.95):
    preds, gts = [], []
    for _ in range(frames):
        gt_pos = rng.uniform(10, 50, size=(15, 3))
        gt_vis = rng.random(15) < 0.9
        pred_pos = gt_pos + rng.normal(0, sigma, size=(15, 3))
        pred_vis = rng.random(15) < pred_visible_p
        preds.append(kps_at(pred_pos, pred_vis))
        gts.append(kps_at(gt_pos, gt_vis))
    return AcquisitionSeries(acq_id, preds, gts, spacing, ga_weeks=ga)


def counting_oracle(series_list, tau):
    """Brute-force per-merged-name counting, independent of pck()."""
    out = {}
    for s in series_list:
        counts = {m: [0, 0] for m in MERGED_NAMES}
        for pred, gt in zip(s.predictions, s.ground_truth):
            for i, name in enumerate(KEYPOINT_NAMES):
                if not gt.visible[i]:
                    continue
                m = MERGED_OF[name]
                counts[m][0] += 1
                if pred.visible[i]:
                    d = 0.0
                    for ax in range(3):
                        d += ((pred.positions[i, ax] - gt.positions[i, ax]) * s.spacing[ax]) ** 2
                    if math.sqrt(d) <= tau:
                        counts[m][1] += 1
        out[s.acquisition_id] = counts
    return out


# ---------------------------------------------------------------------------
# distances
# ---------------------------------------------------------------------------


def test_distance_identical_zero(rng):
    gt = kps_at(rng.uniform(0, 50, (15, 3)))
    d = keypoint_distance_mm(gt, gt, (1, 1, 1))
    assert np.all(d == 0.0)


def test_distance_6_8_10():
    gt = kps_at(np.zeros((15, 3)))
    pred_pos = np.zeros((15, 3))
    pred_pos[:, 0] = 6.0
    pred_pos[:, 1] = 8.0
    d = keypoint_distance_mm(kps_at(pred_pos), gt, (1, 1, 1))
    assert np.allclose(d, 10.0)


def test_distance_anisotropic_spacing():
    gt = kps_at(np.zeros((15, 3)))
    pred = kps_at(np.full((15, 3), 2.0))
    d = keypoint_distance_mm(pred, gt, (3.0, 3.0, 3.0))
    assert np.allclose(d, math.sqrt(108.0))
    assert d[0] == pytest.approx(10.392304845413264)


def test_distance_visibility_rules():
    gt_vis = np.ones(15, dtype=bool)
    gt_vis[3] = False
    pred_vis = np.ones(15, dtype=bool)
    pred_vis[5] = False
    d = keypoint_distance_mm(
        kps_at(np.zeros((15, 3)), pred_vis), kps_at(np.zeros((15, 3)), gt_vis), (1, 1, 1)
    )
    assert np.isnan(d[3])          # gt invisible -> excluded
    assert np.isinf(d[5])          # missed detection -> incorrect
    assert d[0] == 0.0


# ---------------------------------------------------------------------------
# pck
# ---------------------------------------------------------------------------


def test_pck_perfect_predictions(rng):
    gt = [kps_at(rng.uniform(0, 50, (15, 3))) for _ in range(3)]
    series = AcquisitionSeries("a", gt, gt, (1, 1, 1))
    report = pck([series], 10.0)
    table = report.pck_by_acquisition()
    assert np.all(table == 100.0)


def test_pck_inclusive_threshold():
    gt_pos = np.zeros((15, 3))
    pred_pos = np.zeros((15, 3))
    vis = np.zeros(15, dtype=bool)
    i_l = KEYPOINT_NAMES.index("eye_L")
    i_r = KEYPOINT_NAMES.index("eye_R")
    vis[i_l] = vis[i_r] = True
    pred_pos[i_l, 0] = 10.0   # exactly tau -> correct (inclusive)
    pred_pos[i_r, 0] = 10.4   # beyond tau -> incorrect
    series = AcquisitionSeries("a", [kps_at(pred_pos, vis)], [kps_at(gt_pos, vis)], (1, 1, 1))
    report = pck([series], 10.0)
    j = MERGED_NAMES.index("eyes")
    assert report.evaluated[0, j] == 2
    assert report.correct[0, j] == 1


def test_flat_pairs_wrap(rng):
    gt = kps_at(rng.uniform(0, 50, (15, 3)))
    pred = kps_at(gt.positions + 1.0)
    series = series_from_pairs([(pred, gt), (pred, gt)], (1, 1, 1))
    report = pck([series], 10.0)
    assert report.acquisition_ids == ["all"]
    assert int(report.evaluated.sum()) == 30


def test_pck_matches_counting_oracle(rng):
    series_list = [random_series(rng, f"acq{i}", frames=5) for i in range(4)]
    report = pck(series_list, 10.0)
    oracle = counting_oracle(series_list, 10.0)
    for i, aid in enumerate(report.acquisition_ids):
        for j, m in enumerate(MERGED_NAMES):
            assert report.evaluated[i, j] == oracle[aid][m][0]
            assert report.correct[i, j] == oracle[aid][m][1]


def test_pck_rigid_invariance(rng):
    from fetaug.grid import rotation_from_euler_deg

    series = random_series(rng, "a", frames=3, spacing=(1.0, 1.0, 1.0))
    rot = rotation_from_euler_deg((25.0, -40.0, 60.0))
    shift = np.array([5.0, -3.0, 11.0])

    def move(kps):
        return KeypointSet(kps.positions @ rot.T + shift, kps.visible.copy())

    moved = AcquisitionSeries(
        "a", [move(p) for p in series.predictions], [move(g) for g in series.ground_truth],
        series.spacing,
    )
    r1 = pck([series], 10.0)
    r2 = pck([moved], 10.0)
    assert np.array_equal(r1.correct, r2.correct)
    assert np.array_equal(r1.evaluated, r2.evaluated)


def test_pck_requires_positive_tau(rng):
    series = random_series(rng)
    with pytest.raises(ParameterError):
        pck([series], 0.0)


def test_pck_empty_input():
    with pytest.raises(DataError):
        pck([], 10.0)


def test_pck_nothing_visible():
    gt = [kps_at(np.zeros((15, 3)), np.zeros(15, dtype=bool))]
    series = AcquisitionSeries("a", gt, gt, (1, 1, 1))
    with pytest.raises(DataError):
        pck([series], 10.0)


# ---------------------------------------------------------------------------
# groups
# ---------------------------------------------------------------------------


def test_groups_uniform(rng):
    # All predictions visible: a huge threshold makes everything correct.
    series_list = [random_series(rng, f"acq{i}", pred_visible_p=1.1) for i in range(3)]
    report = pck(series_list, 1e9)
    groups = group_stats(report)
    assert all(g["pck"] == 100.0 for g in groups.values())


def test_groups_only_wrists_wrong():
    gt_pos = np.zeros((15, 3))
    pred_pos = np.zeros((15, 3))
    for name in ("wrist_L", "wrist_R"):
        pred_pos[KEYPOINT_NAMES.index(name), 0] = 50.0
    series = AcquisitionSeries("a", [kps_at(pred_pos)], [kps_at(gt_pos)], (1, 1, 1))
    groups = group_stats(pck([series], 10.0))
    assert groups["group1"]["pck"] == 100.0
    assert groups["group2"]["pck"] == 100.0
    assert groups["group3"]["pck"] < 100.0


def test_groups_additive(rng):
    series_list = [random_series(rng, f"acq{i}") for i in range(3)]
    report = pck(series_list, 10.0)
    groups = group_stats(report)
    total_eval = sum(g["evaluated"] for g in groups.values())
    total_corr = sum(g["correct"] for g in groups.values())
    assert total_eval == int(report.evaluated.sum())
    assert total_corr == int(report.correct.sum())


# ---------------------------------------------------------------------------
# curve
# ---------------------------------------------------------------------------


def test_curve_extremes(rng):
    series = random_series(rng, frames=6, pred_visible_p=1.1)
    curve = pck_curve([series], [1e-12, 1e9])
    for m in MERGED_NAMES:
        vals = curve["keypoints"][m]
        if vals[0] is not None:
            assert vals[0] == 0.0
        assert vals[1] == 100.0


def test_curve_monotone(rng):
    series_list = [random_series(rng, f"a{i}", frames=5) for i in range(2)]
    taus = [2, 4, 6, 8, 10, 12, 14, 16, 18, 20]
    curve = pck_curve(series_list, taus)
    for vals in list(curve["keypoints"].values()) + list(curve["groups"].values()):
        present = [v for v in vals if v is not None]
        assert all(a <= b + 1e-12 for a, b in zip(present, present[1:]))


def test_curve_recompute_matches_single(rng):
    series_list = [random_series(rng, "a", frames=5)]
    curve = pck_curve(series_list, [5.0, 10.0])
    single = pck(series_list, 5.0)
    pooled_ev = single.evaluated.sum(axis=0)
    pooled_co = single.correct.sum(axis=0)
    for j, m in enumerate(MERGED_NAMES):
        want = None if pooled_ev[j] == 0 else 100.0 * pooled_co[j] / pooled_ev[j]
        assert curve["keypoints"][m][0] == want


def test_curve_rejects_unsorted(rng):
    with pytest.raises(ParameterError):
        pck_curve([random_series(rng)], [10.0, 5.0])


# ---------------------------------------------------------------------------
# GA binning
# ---------------------------------------------------------------------------


def test_ga_single_bin_equals_overall(rng):
    series_list = [random_series(rng, f"a{i}", ga=20.0 + i) for i in range(4)]
    binned = ga_binned_stats(series_list, [15.0, 40.0])
    report = pck(series_list, 10.0)
    overall = report.overall_by_acquisition()
    b = binned["bins"][0]
    assert b["n"] == 4
    assert b["median"] == pytest.approx(float(np.median(overall)))
    assert b["mean"] == pytest.approx(float(np.mean(overall)))


def test_ga_empty_bin_marked(rng):
    series_list = [random_series(rng, "a", ga=20.0)]
    binned = ga_binned_stats(series_list, [10.0, 15.0, 25.0])
    assert binned["bins"][0]["n"] == 0
    assert binned["bins"][0]["median"] is None
    assert binned["bins"][1]["n"] == 1


def test_ga_missing_excluded_with_count(rng):
    series_list = [random_series(rng, "a", ga=20.0), random_series(rng, "b", ga=None)]
    binned = ga_binned_stats(series_list, [15.0, 25.0])
    assert binned["skipped"] == 1
    assert binned["bins"][0]["n"] == 1


def test_ga_two_bin_manual_partition(rng):
    series_list = [
        random_series(rng, "young1", ga=19.0),
        random_series(rng, "young2", ga=21.0),
        random_series(rng, "old1", ga=31.0),
    ]
    binned = ga_binned_stats(series_list, [18.0, 25.0, 38.0])
    young = pck(series_list[:2], 10.0).overall_by_acquisition()
    old = pck(series_list[2:], 10.0).overall_by_acquisition()
    assert binned["bins"][0]["mean"] == pytest.approx(float(np.mean(young)))
    assert binned["bins"][1]["mean"] == pytest.approx(float(np.mean(old)))


# ---------------------------------------------------------------------------
# report serialization
# ---------------------------------------------------------------------------


def test_report_json_roundtrip(rng):
    series_list = [random_series(rng, f"a{i}", ga=20.0 + i) for i in range(3)]
    report = pck(series_list, 10.0)
    doc = report.to_json_dict()
    back = EvalReport.from_json_dict(doc)
    assert back.tau_mm == report.tau_mm
    assert back.acquisition_ids == report.acquisition_ids
    assert np.array_equal(back.evaluated, report.evaluated)
    assert np.array_equal(back.correct, report.correct)
    assert back.to_json_dict() == doc


def test_report_csv_shape(rng):
    report = pck([random_series(rng, "a")], 10.0)
    rows = report.to_csv_rows()
    assert rows[0] == ["acquisition_id", "keypoint", "evaluated", "correct", "pck"]
    assert len(rows) == 1 + len(MERGED_NAMES)


def test_summary_stats_across_acquisitions(rng):
    series_list = [random_series(rng, f"a{i}") for i in range(5)]
    report = pck(series_list, 10.0)
    summary = report.summary()
    table = report.pck_by_acquisition()
    j = MERGED_NAMES.index("eyes")
    col = table[:, j]
    col = col[~np.isnan(col)]
    assert summary["eyes"]["median"] == pytest.approx(float(np.median(col)))
    assert summary["eyes"]["std"] == pytest.approx(float(np.std(col)))
