"""PCK evaluation with keypoint merging, difficulty groups, and GA binning.

A keypoint is evaluated where the ground truth is visible; it is correct
when the Euclidean error in millimeters is <= tau (inclusive).  A visible
ground truth with an invisible prediction counts as evaluated and
incorrect, penalizing missed detections.  Left/right pairs are merged for
reporting; PCK is computed per acquisition first and summary statistics
are taken across acquisitions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ParameterError, ShapeError
from .heatmap import GROUPS, KEYPOINT_NAMES, MERGED_NAMES, MERGED_OF, KeypointSet

__all__ = [
    "AcquisitionSeries",
    "EvalReport",
    "keypoint_distance_mm",
    "series_from_pairs",
    "pck",
    "group_stats",
    "pck_curve",
    "ga_binned_stats",
]

_MERGED_INDEX = {m: i for i, m in enumerate(MERGED_NAMES)}
_KP_TO_MERGED = np.array([_MERGED_INDEX[MERGED_OF[n]] for n in KEYPOINT_NAMES])


@dataclass(frozen=True)
class AcquisitionSeries:
    """Prediction/ground-truth keypoint pairs for one acquisition."""

    acquisition_id: str
    predictions: list[KeypointSet]
    ground_truth: list[KeypointSet]
    spacing: tuple[float, float, float]
    ga_weeks: float | None = None

    def __post_init__(self):
        if len(self.predictions) != len(self.ground_truth):
            raise ShapeError(
                f"{self.acquisition_id}: {len(self.predictions)} predictions vs "
                f"{len(self.ground_truth)} ground-truth frames"
            )
        if len(self.predictions) < 1:
            raise ParameterError(f"{self.acquisition_id}: series must have at least one frame")

    def __len__(self) -> int:
        return len(self.predictions)


def keypoint_distance_mm(pred: KeypointSet, gt: KeypointSet, spacing) -> np.ndarray:
    """Per-keypoint error in millimeters.

    NaN where the ground truth is invisible (excluded downstream), +inf
    where the ground truth is visible but the prediction is not.
    """
    sp = np.asarray(spacing, dtype=np.float64)
    delta = (pred.positions - gt.positions) * sp
    d = np.linalg.norm(delta, axis=1)
    d = np.where(gt.visible & ~pred.visible, np.inf, d)
    return np.where(gt.visible, d, np.nan)


def _series_counts(series: AcquisitionSeries, tau_mm: float) -> tuple[np.ndarray, np.ndarray]:
    """(evaluated, correct) per merged keypoint name for one acquisition."""
    evaluated = np.zeros(len(MERGED_NAMES), dtype=np.int64)
    correct = np.zeros(len(MERGED_NAMES), dtype=np.int64)
    for pred, gt in zip(series.predictions, series.ground_truth):
        d = keypoint_distance_mm(pred, gt, series.spacing)
        for i in range(len(KEYPOINT_NAMES)):
            if np.isnan(d[i]):
                continue
            m = _KP_TO_MERGED[i]
            evaluated[m] += 1
            if d[i] <= tau_mm:
                correct[m] += 1
    return evaluated, correct


@dataclass
class EvalReport:
    """Per-acquisition, per-keypoint PCK counts plus aggregates."""

    tau_mm: float
    acquisition_ids: list[str]
    evaluated: np.ndarray          # (n_acq, n_merged) int
    correct: np.ndarray            # (n_acq, n_merged) int
    ga_weeks: list = field(default_factory=list)

    def pck_by_acquisition(self) -> np.ndarray:
        """(n_acq, n_merged) PCK in percent; NaN where nothing evaluated."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(
                self.evaluated > 0, 100.0 * self.correct / self.evaluated, np.nan
            )

    def overall_by_acquisition(self) -> np.ndarray:
        """Pooled PCK per acquisition across all keypoints."""
        ev = self.evaluated.sum(axis=1)
        co = self.correct.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(ev > 0, 100.0 * co / ev, np.nan)

    def summary(self) -> dict:
        """Median / mean +- std across acquisitions, per merged keypoint."""
        table = self.pck_by_acquisition()
        out = {}
        for j, name in enumerate(MERGED_NAMES):
            col = table[:, j]
            col = col[~np.isnan(col)]
            out[name] = {
                "median": float(np.median(col)) if col.size else None,
                "mean": float(np.mean(col)) if col.size else None,
                "std": float(np.std(col)) if col.size else None,
                "n_acquisitions": int(col.size),
            }
        overall = self.overall_by_acquisition()
        overall = overall[~np.isnan(overall)]
        out["overall"] = {
            "median": float(np.median(overall)) if overall.size else None,
            "mean": float(np.mean(overall)) if overall.size else None,
            "std": float(np.std(overall)) if overall.size else None,
            "n_acquisitions": int(overall.size),
        }
        return out

    def to_json_dict(self) -> dict:
        return {
            "format_version": 1,
            "tau_mm": self.tau_mm,
            "keypoints": list(MERGED_NAMES),
            "acquisitions": [
                {
                    "acquisition_id": aid,
                    "ga_weeks": self.ga_weeks[i] if self.ga_weeks else None,
                    "evaluated": self.evaluated[i].tolist(),
                    "correct": self.correct[i].tolist(),
                    "pck": [
                        None if not self.evaluated[i, j] else
                        100.0 * self.correct[i, j] / self.evaluated[i, j]
                        for j in range(len(MERGED_NAMES))
                    ],
                }
                for i, aid in enumerate(self.acquisition_ids)
            ],
            "groups": group_stats(self),
            "summary": self.summary(),
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "EvalReport":
        if doc.get("format_version") != 1:
            raise DataError(f"unsupported report version {doc.get('format_version')!r}")
        rows = doc["acquisitions"]
        return cls(
            tau_mm=float(doc["tau_mm"]),
            acquisition_ids=[r["acquisition_id"] for r in rows],
            evaluated=np.array([r["evaluated"] for r in rows], dtype=np.int64),
            correct=np.array([r["correct"] for r in rows], dtype=np.int64),
            ga_weeks=[r.get("ga_weeks") for r in rows],
        )

    def to_csv_rows(self) -> list[list]:
        """Rows of (acquisition_id, keypoint, evaluated, correct, pck)."""
        rows: list[list] = [["acquisition_id", "keypoint", "evaluated", "correct", "pck"]]
        for i, aid in enumerate(self.acquisition_ids):
            for j, name in enumerate(MERGED_NAMES):
                ev = int(self.evaluated[i, j])
                co = int(self.correct[i, j])
                pck_val = "" if ev == 0 else f"{100.0 * co / ev:.6g}"
                rows.append([aid, name, ev, co, pck_val])
        return rows


def series_from_pairs(pairs, spacing, acquisition_id: str = "all",
                      ga_weeks: float | None = None) -> AcquisitionSeries:
    """Wrap flat (prediction, ground truth) pairs as one acquisition."""
    preds = [p for p, _ in pairs]
    gts = [g for _, g in pairs]
    return AcquisitionSeries(acquisition_id, preds, gts, tuple(spacing), ga_weeks=ga_weeks)


def pck(series_list, tau_mm: float = 10.0) -> EvalReport:
    """PCK report over a sequence of :class:`AcquisitionSeries`."""
    if not (tau_mm > 0):
        raise ParameterError(f"tau must be > 0, got {tau_mm}")
    series_list = list(series_list)
    if not series_list:
        raise DataError("no acquisitions to evaluate")
    ids, evs, cos, gas = [], [], [], []
    for s in series_list:
        ev, co = _series_counts(s, tau_mm)
        ids.append(s.acquisition_id)
        evs.append(ev)
        cos.append(co)
        gas.append(s.ga_weeks)
    evaluated = np.stack(evs)
    if evaluated.sum() == 0:
        raise DataError("zero evaluated keypoints: nothing visible in the ground truth")
    return EvalReport(
        tau_mm=float(tau_mm),
        acquisition_ids=ids,
        evaluated=evaluated,
        correct=np.stack(cos),
        ga_weeks=gas,
    )


def group_stats(report: EvalReport) -> dict:
    """Pooled correct/evaluated per difficulty group."""
    out = {}
    for gid, names in GROUPS.items():
        cols = [_MERGED_INDEX[n] for n in names]
        ev = int(report.evaluated[:, cols].sum())
        co = int(report.correct[:, cols].sum())
        out[f"group{gid}"] = {
            "keypoints": list(names),
            "evaluated": ev,
            "correct": co,
            "pck": None if ev == 0 else 100.0 * co / ev,
        }
    return out


def pck_curve(series_list, taus) -> dict:
    """PCK per merged keypoint and per group at each threshold."""
    taus = [float(t) for t in taus]
    if any(t <= 0 for t in taus) or sorted(taus) != taus:
        raise ParameterError("thresholds must be positive and ascending")
    out = {"tau_mm": taus, "keypoints": {m: [] for m in MERGED_NAMES},
           "groups": {f"group{g}": [] for g in GROUPS}}
    series_list = list(series_list)
    for t in taus:
        report = pck(series_list, t)
        pooled_ev = report.evaluated.sum(axis=0)
        pooled_co = report.correct.sum(axis=0)
        for j, m in enumerate(MERGED_NAMES):
            val = None if pooled_ev[j] == 0 else 100.0 * pooled_co[j] / pooled_ev[j]
            out["keypoints"][m].append(val)
        for gid, stats in group_stats(report).items():
            out["groups"][gid].append(stats["pck"])
    return out


def ga_binned_stats(series_list, bin_edges, tau_mm: float = 10.0) -> dict:
    """Per-GA-bin statistics of per-acquisition pooled PCK.

    Series without a GA are excluded and counted in ``skipped``.  Empty
    bins are reported with ``n = 0`` and null statistics, not zeros.
    """
    edges = [float(e) for e in bin_edges]
    if len(edges) < 2 or sorted(edges) != edges:
        raise ParameterError("bin edges must be ascending with at least two values")
    series_list = list(series_list)
    with_ga = [s for s in series_list if s.ga_weeks is not None]
    skipped = len(series_list) - len(with_ga)
    bins: list[dict] = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        members = [s for s in with_ga if lo <= s.ga_weeks < hi]
        if members:
            report = pck(members, tau_mm)
            vals = report.overall_by_acquisition()
            vals = vals[~np.isnan(vals)]
        else:
            vals = np.array([])
        bins.append(
            {
                "ga_lo": lo,
                "ga_hi": hi,
                "n": int(len(members)),
                "median": float(np.median(vals)) if vals.size else None,
                "mean": float(np.mean(vals)) if vals.size else None,
                "std": float(np.std(vals)) if vals.size else None,
            }
        )
    return {"bins": bins, "skipped": skipped}
