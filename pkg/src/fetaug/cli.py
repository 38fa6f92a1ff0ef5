"""Command-line surface.

Every stochastic subcommand requires an explicit ``--seed``; outputs are a
pure function of (inputs, config, seed), independent of ``--workers``.
One machine-readable JSON summary line goes to stdout on success; logs
and errors go to stderr.  Exit codes: 0 success, 2 usage, 3 I/O or file
format, 4 schema, 5 placement infeasible, 6 data contract.

Sample directories are manifest-driven: a ``manifest.json`` lists samples
with their volume / keypoint / mask files, so subcommands compose
(``phantom gen`` -> ``bank build`` / ``augment run`` -> ``heatmap make``
-> ``keypoints extract`` -> ``eval pck``).
"""

from __future__ import annotations

import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import __version__, fileio, nifti
from .augment import AugmentConfig, LabeledSample, apply_pipeline
from .errors import (
    DataError,
    EmptyBankError,
    FetaugError,
    FileFormatError,
    ParameterError,
    PlacementInfeasibleError,
    SchemaError,
    ShapeError,
)
from .evaluate import AcquisitionSeries, ga_binned_stats, pck
from .heatmap import KEYPOINT_NAMES, HeatmapStack, extract, synthesize
from .inpaint import InpaintParams, build_bank_entry, load_bank, sample_composite, save_bank
from .phantom import PhantomSpec, make_phantom, oracle_predict
from .seeding import substream

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_SCHEMA = 4
EXIT_INFEASIBLE = 5
EXIT_DATA = 6

MANIFEST_VERSION = 1


def _exit_code_for(exc: FetaugError) -> int:
    if isinstance(exc, (FileFormatError,)):
        return EXIT_IO
    if isinstance(exc, SchemaError):
        return EXIT_SCHEMA
    if isinstance(exc, (PlacementInfeasibleError, EmptyBankError)):
        return EXIT_INFEASIBLE
    if isinstance(exc, (DataError, ShapeError, ParameterError)):
        return EXIT_DATA
    return 1


def _emit(summary: dict) -> None:
    click.echo(json.dumps(summary, sort_keys=True))


def _fail(exc: Exception) -> None:
    if isinstance(exc, OSError):
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_IO)
    if isinstance(exc, FetaugError):
        click.echo(f"error[{exc.code}]: {exc}", err=True)
        sys.exit(_exit_code_for(exc))
    raise exc


def _read_manifest(path: Path) -> dict:
    doc = fileio.read_json(path / "manifest.json")
    if doc.get("format_version") != MANIFEST_VERSION:
        raise SchemaError(f"{path}: unsupported manifest version {doc.get('format_version')!r}")
    return doc


def _write_manifest(path: Path, samples: list[dict], extra: dict | None = None) -> None:
    doc = {"format_version": MANIFEST_VERSION, "samples": samples}
    if extra:
        doc.update(extra)
    fileio.write_json(path / "manifest.json", doc)


def _load_sample(root: Path, row: dict) -> LabeledSample:
    volume = nifti.read_volume(root / row["volume"])
    kdoc = fileio.read_keypoints(root / row["keypoints"])
    masks = {}
    for key in ("body_mask", "fluid_mask", "uterus_mask"):
        if row.get(key):
            masks[key] = nifti.read_mask(root / row[key])
    return LabeledSample(
        volume=volume,
        keypoints=kdoc.keypoints,
        heatmap_sigma=kdoc.heatmap_sigma or 2.0,
        provenance=kdoc.provenance or "raw",
        acquisition_id=kdoc.acquisition_id or row["id"],
        **masks,
    )


def _save_sample(root: Path, sample_id: str, sample: LabeledSample,
                 ga_weeks: float | None = None) -> dict:
    row: dict = {"id": sample_id, "volume": f"{sample_id}_volume.nii",
                 "keypoints": f"{sample_id}_keypoints.json"}
    nifti.write_volume(sample.volume, root / row["volume"])
    for key, mask in sample.masks().items():
        row[key] = f"{sample_id}_{key}.nii"
        nifti.write_mask(mask, root / row[key])
    fileio.write_keypoints(
        root / row["keypoints"],
        fileio.KeypointDoc(
            keypoints=sample.keypoints,
            volume=row["volume"],
            acquisition_id=sample.acquisition_id or sample_id,
            ga_weeks=ga_weeks,
            heatmap_sigma=sample.heatmap_sigma,
            provenance=sample.provenance,
        ),
    )
    return row


def _run_indexed(worker, count: int, workers: int) -> list:
    """Run ``worker(index)`` for every index with stable output order."""
    if workers <= 1:
        return [worker(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(worker, range(count)))


@click.group()
@click.version_option(__version__)
def main():
    """Volumetric augmentation engine and keypoint toolkit."""


# ---------------------------------------------------------------------------
# phantom
# ---------------------------------------------------------------------------


@main.group()
def phantom():
    """Synthetic phantom generation."""


@phantom.command("gen")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--count", type=int, default=1, show_default=True)
@click.option("--seed", type=int, required=True)
@click.option("--dims", type=int, default=96, show_default=True)
@click.option("--spacing", type=float, default=3.0, show_default=True)
@click.option("--scale-min", type=float, default=0.6, show_default=True)
@click.option("--scale-max", type=float, default=1.0, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
def phantom_gen(out_dir, count, seed, dims, spacing, scale_min, scale_max, workers):
    """Write phantom volumes, masks, and keypoints."""
    try:
        spec = PhantomSpec(dims=(dims,) * 3, spacing=(spacing,) * 3,
                           scale_range=(scale_min, scale_max))
        out_dir.mkdir(parents=True, exist_ok=True)

        def worker(i: int) -> dict:
            ph = make_phantom(spec, substream(seed, i))
            row = _save_sample(out_dir, f"phantom_{i:04d}", ph.sample)
            row["scale"] = ph.params["scale"]
            return row

        rows = _run_indexed(worker, count, workers)
        _write_manifest(out_dir, rows, {"seed": seed})
        _emit({"command": "phantom gen", "out": str(out_dir), "count": len(rows), "seed": seed})
    except Exception as exc:
        _fail(exc)


# ---------------------------------------------------------------------------
# bank
# ---------------------------------------------------------------------------


@main.group()
def bank():
    """Inpainting bank construction."""


@bank.command("build")
@click.option("--in", "in_dir", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--seed", type=int, required=True)
@click.option("--params", "params_path", type=click.Path(exists=True, path_type=Path))
def bank_build(in_dir, out_dir, seed, params_path):
    """Empty uteruses and crop bodies from a sample directory."""
    try:
        params = fileio.read_inpaint_params(params_path)[0] if params_path else InpaintParams()
        manifest = _read_manifest(in_dir)
        bodies, uteri = [], []
        for i, row in enumerate(manifest["samples"]):
            sample = _load_sample(in_dir, row)
            if sample.body_mask is None or sample.fluid_mask is None:
                raise DataError(f"sample {row['id']} lacks body/fluid masks")
            uterus, body = build_bank_entry(
                sample.volume, sample.body_mask, sample.fluid_mask, sample.keypoints,
                params, substream(seed, i), source_id=row["id"],
            )
            bodies.append(body)
            uteri.append(uterus)
        save_bank(out_dir, bodies, uteri, params)
        _emit({"command": "bank build", "out": str(out_dir), "entries": len(bodies), "seed": seed})
    except Exception as exc:
        _fail(exc)


# ---------------------------------------------------------------------------
# composite
# ---------------------------------------------------------------------------


@main.group()
def composite():
    """Cross-population composites from a bank."""


@composite.command("sample")
@click.option("--bank", "bank_dir", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--count", type=int, default=1, show_default=True)
@click.option("--seed", type=int, required=True)
@click.option("--workers", type=int, default=1, show_default=True)
def composite_sample_cmd(bank_dir, out_dir, count, seed, workers):
    """Draw composited samples (scaled bodies placed in foreign uteruses)."""
    try:
        bodies, uteri, params = load_bank(bank_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

        def worker(i: int) -> dict:
            sample = sample_composite(bodies, uteri, params, substream(seed, i))
            row = _save_sample(out_dir, f"composite_{i:04d}", sample)
            row["provenance"] = sample.provenance
            return row

        rows = _run_indexed(worker, count, workers)
        _write_manifest(out_dir, rows, {"seed": seed})
        _emit({"command": "composite sample", "out": str(out_dir), "count": len(rows), "seed": seed})
    except Exception as exc:
        _fail(exc)


# ---------------------------------------------------------------------------
# augment
# ---------------------------------------------------------------------------


@main.group()
def augment():
    """Stochastic augmentation over sample directories."""


@augment.command("run")
@click.option("--in", "in_dir", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--seed", type=int, required=True)
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path))
@click.option("--workers", type=int, default=1, show_default=True)
def augment_run(in_dir, out_dir, seed, config_path, workers):
    """Apply the augmentation pipeline to every sample in a directory."""
    try:
        cfg = fileio.read_augment_config(config_path)[0] if config_path else AugmentConfig()
        manifest = _read_manifest(in_dir)
        rows_in = manifest["samples"]
        out_dir.mkdir(parents=True, exist_ok=True)

        def worker(i: int) -> dict:
            sample = _load_sample(in_dir, rows_in[i])
            out, log = apply_pipeline(sample, cfg, substream(seed, i))
            row = _save_sample(out_dir, rows_in[i]["id"], out)
            row["log"] = log
            row["provenance"] = out.provenance
            return row

        rows = _run_indexed(worker, len(rows_in), workers)
        _write_manifest(out_dir, rows, {"seed": seed})
        _emit({"command": "augment run", "out": str(out_dir), "count": len(rows), "seed": seed})
    except Exception as exc:
        _fail(exc)


# ---------------------------------------------------------------------------
# heatmap
# ---------------------------------------------------------------------------


@main.group()
def heatmap():
    """Heatmap synthesis from keypoints."""


@heatmap.command("make")
@click.option("--in", "in_dir", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--sigma", type=float, default=None,
              help="Override the per-sample heatmap sigma (voxels).")
@click.option("--workers", type=int, default=1, show_default=True)
def heatmap_make(in_dir, out_dir, sigma, workers):
    """Synthesize per-keypoint heatmap channels (one NIfTI per channel)."""
    try:
        manifest = _read_manifest(in_dir)
        rows_in = manifest["samples"]
        out_dir.mkdir(parents=True, exist_ok=True)

        def worker(i: int) -> dict:
            row = rows_in[i]
            sample = _load_sample(in_dir, row)
            sig = sigma if sigma is not None else sample.heatmap_sigma
            hm = synthesize(sample.keypoints, sample.volume.dims, sig)
            channels = {}
            for c, name in enumerate(KEYPOINT_NAMES):
                fname = f"{row['id']}_heatmap_{name}.nii"
                nifti.write_volume(
                    type(sample.volume)(hm.data[c], sample.volume.spacing), out_dir / fname
                )
                channels[name] = fname
            sidecar = {
                "format_version": 1,
                "sigma_vox": sig,
                "valid": {name: bool(hm.valid[c]) for c, name in enumerate(KEYPOINT_NAMES)},
                "channels": channels,
            }
            fileio.write_json(out_dir / f"{row['id']}_heatmap.json", sidecar)
            return {"id": row["id"], "heatmap": f"{row['id']}_heatmap.json",
                    "keypoints": row["keypoints"]}

        rows = _run_indexed(worker, len(rows_in), workers)
        _write_manifest(out_dir, rows)
        _emit({"command": "heatmap make", "out": str(out_dir), "count": len(rows)})
    except Exception as exc:
        _fail(exc)


# ---------------------------------------------------------------------------
# keypoints
# ---------------------------------------------------------------------------


@main.group()
def keypoints():
    """Keypoint extraction from heatmaps."""


@keypoints.command("extract")
@click.option("--in", "in_dir", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--workers", type=int, default=1, show_default=True)
def keypoints_extract(in_dir, out_dir, workers):
    """Recover sub-voxel keypoints from heatmap channel files."""
    try:
        manifest = _read_manifest(in_dir)
        rows_in = manifest["samples"]
        out_dir.mkdir(parents=True, exist_ok=True)

        def worker(i: int) -> dict:
            row = rows_in[i]
            sidecar = fileio.read_json(in_dir / row["heatmap"])
            if sidecar.get("format_version") != 1:
                raise SchemaError(f"unsupported heatmap sidecar version in {row['heatmap']}")
            channels = []
            spacing = None
            for name in KEYPOINT_NAMES:
                vol = nifti.read_volume(in_dir / sidecar["channels"][name])
                channels.append(vol.data)
                spacing = vol.spacing
            hm = HeatmapStack(
                np.stack(channels),
                float(sidecar["sigma_vox"]),
                np.array([sidecar["valid"][name] for name in KEYPOINT_NAMES]),
            )
            kps = extract(hm)
            out_name = f"{row['id']}_keypoints.json"
            fileio.write_keypoints(
                out_dir / out_name,
                fileio.KeypointDoc(keypoints=kps, acquisition_id=row["id"],
                                   heatmap_sigma=float(sidecar["sigma_vox"])),
            )
            return {"id": row["id"], "keypoints": out_name}

        rows = _run_indexed(worker, len(rows_in), workers)
        _write_manifest(out_dir, rows)
        _emit({"command": "keypoints extract", "out": str(out_dir), "count": len(rows)})
    except Exception as exc:
        _fail(exc)


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


@main.group(name="eval")
def eval_group():
    """PCK evaluation."""


@eval_group.command("pck")
@click.option("--pred", "pred_dir", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--gt", "gt_dir", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--tau", type=float, default=10.0, show_default=True)
@click.option("--spacing", type=float, default=None,
              help="Override spacing (mm/voxel) when keypoint files carry none.")
@click.option("--out", "out_json", type=click.Path(path_type=Path))
@click.option("--csv", "out_csv", type=click.Path(path_type=Path))
@click.option("--ga-bins", type=str, default=None,
              help="Comma-separated GA bin edges for an extra binned table.")
def eval_pck(pred_dir, gt_dir, tau, spacing, out_json, out_csv, ga_bins):
    """Compare predicted keypoints to ground truth, grouped per acquisition."""
    try:
        gt_manifest = _read_manifest(gt_dir)
        pred_manifest = _read_manifest(pred_dir)
        pred_by_id = {row["id"]: row for row in pred_manifest["samples"]}
        by_acq: dict[str, dict] = {}
        for row in gt_manifest["samples"]:
            if row["id"] not in pred_by_id:
                raise DataError(f"prediction missing for sample {row['id']}")
            gt_doc = fileio.read_keypoints(gt_dir / row["keypoints"])
            pred_doc = fileio.read_keypoints(pred_dir / pred_by_id[row["id"]]["keypoints"])
            sp = (spacing,) * 3 if spacing else None
            if sp is None:
                if not row.get("volume"):
                    raise DataError(f"sample {row['id']} has no volume to take spacing from")
                sp = nifti.read_volume(gt_dir / row["volume"]).spacing
            acq = gt_doc.acquisition_id or row["id"]
            entry = by_acq.setdefault(
                acq, {"preds": [], "gts": [], "spacing": sp, "ga": gt_doc.ga_weeks}
            )
            entry["preds"].append(pred_doc.keypoints)
            entry["gts"].append(gt_doc.keypoints)
        series = [
            AcquisitionSeries(acq, v["preds"], v["gts"], v["spacing"], ga_weeks=v["ga"])
            for acq, v in sorted(by_acq.items())
        ]
        report = pck(series, tau)
        doc = report.to_json_dict()
        if ga_bins:
            edges = [float(e) for e in ga_bins.split(",")]
            doc["ga_binned"] = ga_binned_stats(series, edges, tau)
        if out_json:
            fileio.write_json(out_json, doc)
        if out_csv:
            fileio.write_report_csv(out_csv, report)
        summary = doc["summary"]["overall"]
        _emit({"command": "eval pck", "tau_mm": tau, "acquisitions": len(series),
               "overall": summary})
    except Exception as exc:
        _fail(exc)


# ---------------------------------------------------------------------------
# oracle predictions (testing aid)
# ---------------------------------------------------------------------------


@main.group()
def oracle():
    """Synthetic predictions for exercising the evaluator."""


@oracle.command("predict")
@click.option("--in", "in_dir", type=click.Path(exists=True, path_type=Path), required=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--seed", type=int, required=True)
@click.option("--noise-mm", type=float, multiple=True, default=(2.0, 4.0, 8.0),
              show_default=True, help="Per-group displacement sigma (three values).")
def oracle_predict_cmd(in_dir, out_dir, seed, noise_mm):
    """Jitter ground-truth keypoints by per-group Gaussian noise."""
    try:
        if len(noise_mm) == 1:
            noise = {1: noise_mm[0], 2: noise_mm[0], 3: noise_mm[0]}
        elif len(noise_mm) == 3:
            noise = {1: noise_mm[0], 2: noise_mm[1], 3: noise_mm[2]}
        else:
            raise ParameterError("--noise-mm takes one or three values")
        manifest = _read_manifest(in_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        rows = []
        for i, row in enumerate(manifest["samples"]):
            doc = fileio.read_keypoints(in_dir / row["keypoints"])
            sp = nifti.read_volume(in_dir / row["volume"]).spacing if row.get("volume") else (1.0,) * 3
            pred = oracle_predict(doc.keypoints, sp, noise, substream(seed, i))
            out_name = f"{row['id']}_keypoints.json"
            fileio.write_keypoints(
                out_dir / out_name,
                fileio.KeypointDoc(keypoints=pred, acquisition_id=doc.acquisition_id,
                                   ga_weeks=doc.ga_weeks),
            )
            rows.append({"id": row["id"], "keypoints": out_name})
        _write_manifest(out_dir, rows, {"seed": seed})
        _emit({"command": "oracle predict", "out": str(out_dir), "count": len(rows), "seed": seed})
    except Exception as exc:
        _fail(exc)


# ---------------------------------------------------------------------------
# service
# ---------------------------------------------------------------------------


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8040, show_default=True)
def serve(host, port):
    """Run the HTTP service (array-in/array-out ops for training loops)."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port, log_level="warning")


# ---------------------------------------------------------------------------
# benchmark
# ---------------------------------------------------------------------------


@main.command("bench")
@click.option("--seed", type=int, required=True)
@click.option("--count", type=int, default=200, show_default=True)
@click.option("--workers", type=int, default=4, show_default=True)
@click.option("--dims", type=int, default=64, show_default=True)
def bench(seed, count, workers, dims):
    """Throughput of apply_pipeline with every augmentation enabled."""
    try:
        from .bench import pipeline_throughput

        result = pipeline_throughput(seed=seed, count=count, workers=workers, dims=dims)
        _emit({"command": "bench", **result})
    except Exception as exc:
        _fail(exc)


if __name__ == "__main__":
    main()
