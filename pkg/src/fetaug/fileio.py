"""JSON document schemas: keypoints, augment configs, inpaint params, reports.

All documents carry a ``format_version``; readers reject unknown versions.
Unknown top-level fields are preserved: readers return them in an
``extra`` mapping and writers merge them back, so third-party annotations
survive a round-trip.  All writes are atomic (temp file + rename).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .augment import AugmentConfig
from .errors import SchemaError
from .evaluate import EvalReport
from .heatmap import KEYPOINT_NAMES, KeypointSet
from .inpaint import InpaintParams
from .nifti import atomic_write_bytes

__all__ = [
    "KeypointDoc",
    "read_json",
    "write_json",
    "read_keypoints",
    "write_keypoints",
    "read_augment_config",
    "write_augment_config",
    "read_inpaint_params",
    "write_inpaint_params",
    "write_report",
    "read_report",
    "write_report_csv",
]

KEYPOINT_FORMAT_VERSION = 1
CONFIG_FORMAT_VERSION = 1
REPORT_FORMAT_VERSION = 1


def _no_duplicates(pairs):
    keys = [k for k, _ in pairs]
    dupes = {k for k in keys if keys.count(k) > 1}
    if dupes:
        raise SchemaError(f"duplicate JSON keys: {sorted(dupes)}")
    return dict(pairs)


def read_json(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text, object_pairs_hook=_no_duplicates)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: malformed JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: top-level JSON value must be an object")
    return doc


def write_json(path, doc: dict) -> None:
    atomic_write_bytes(path, (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode())


@dataclass
class KeypointDoc:
    """A keypoint file: the landmark set plus sample metadata."""

    keypoints: KeypointSet
    volume: str = ""
    acquisition_id: str = ""
    ga_weeks: float | None = None
    heatmap_sigma: float | None = None
    provenance: str | None = None
    extra: dict = field(default_factory=dict)


_KEYPOINT_KNOWN = {
    "format_version",
    "keypoints",
    "volume",
    "acquisition_id",
    "ga_weeks",
    "heatmap_sigma",
    "provenance",
}


def read_keypoints(path) -> KeypointDoc:
    doc = read_json(path)
    version = doc.get("format_version")
    if version != KEYPOINT_FORMAT_VERSION:
        raise SchemaError(f"{path}: unsupported keypoint format version {version!r}")
    entries = doc.get("keypoints")
    if not isinstance(entries, dict):
        raise SchemaError(f"{path}: 'keypoints' object missing")
    missing = [n for n in KEYPOINT_NAMES if n not in entries]
    if missing:
        raise SchemaError(f"{path}: missing keypoint entries: {missing}")
    unknown_names = [n for n in entries if n not in KEYPOINT_NAMES]
    if unknown_names:
        raise SchemaError(f"{path}: unknown keypoint names: {unknown_names}")
    for name, entry in entries.items():
        for key in ("x", "y", "z", "visible"):
            if key not in entry:
                raise SchemaError(f"{path}: keypoint {name!r} missing field {key!r}")
    kps = KeypointSet.from_dict(entries)
    return KeypointDoc(
        keypoints=kps,
        volume=doc.get("volume", ""),
        acquisition_id=doc.get("acquisition_id", ""),
        ga_weeks=doc.get("ga_weeks"),
        heatmap_sigma=doc.get("heatmap_sigma"),
        provenance=doc.get("provenance"),
        extra={k: v for k, v in doc.items() if k not in _KEYPOINT_KNOWN},
    )


def write_keypoints(path, doc: KeypointDoc) -> None:
    payload = dict(doc.extra)
    payload.update(
        {
            "format_version": KEYPOINT_FORMAT_VERSION,
            "volume": doc.volume,
            "acquisition_id": doc.acquisition_id,
            "keypoints": doc.keypoints.to_dict(),
        }
    )
    if doc.ga_weeks is not None:
        payload["ga_weeks"] = doc.ga_weeks
    if doc.heatmap_sigma is not None:
        payload["heatmap_sigma"] = doc.heatmap_sigma
    if doc.provenance is not None:
        payload["provenance"] = doc.provenance
    write_json(path, payload)


def _read_config_doc(path, cls, version_field: str):
    doc = read_json(path)
    version = doc.get("format_version")
    if version != CONFIG_FORMAT_VERSION:
        raise SchemaError(f"{path}: unsupported {version_field} version {version!r}")
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for name in known:
        if name in doc:
            value = doc[name]
            kwargs[name] = tuple(value) if isinstance(value, list) else value
    extra = {k: v for k, v in doc.items() if k not in known and k != "format_version"}
    try:
        cfg = cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: {exc}") from exc
    return cfg, extra


def _write_config_doc(path, cfg, extra: dict | None) -> None:
    payload = dict(extra or {})
    payload["format_version"] = CONFIG_FORMAT_VERSION
    payload.update(asdict(cfg))
    write_json(path, payload)


def read_augment_config(path) -> tuple[AugmentConfig, dict]:
    from .errors import ParameterError

    try:
        return _read_config_doc(path, AugmentConfig, "augment config")
    except ParameterError as exc:
        raise SchemaError(f"{path}: {exc}") from exc


def write_augment_config(path, cfg: AugmentConfig, extra: dict | None = None) -> None:
    _write_config_doc(path, cfg, extra)


def read_inpaint_params(path) -> tuple[InpaintParams, dict]:
    from .errors import ParameterError

    try:
        return _read_config_doc(path, InpaintParams, "inpaint params")
    except ParameterError as exc:
        raise SchemaError(f"{path}: {exc}") from exc


def write_inpaint_params(path, params: InpaintParams, extra: dict | None = None) -> None:
    _write_config_doc(path, params, extra)


def write_report(path, report: EvalReport) -> None:
    write_json(path, report.to_json_dict())


def read_report(path) -> EvalReport:
    return EvalReport.from_json_dict(read_json(path))


def write_report_csv(path, report: EvalReport) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(report.to_csv_rows())
    atomic_write_bytes(path, buf.getvalue().encode())
