"""HTTP service wrapping the core ops for training-loop clients.

Arrays cross the wire as base64-encoded little-endian bytes in x-fastest
order (the same linearization as the file format), so float32 volumes are
bit-exact across the boundary.  Keypoints travel as 15x4 tables of
(x, y, z, visible).

The pipeline endpoint derives its generator exactly like the CLI does:
``substream(seed, index)``.  Calling it with the seed and per-sample index
a CLI run used reproduces that run's outputs bit-for-bit.
"""

from __future__ import annotations

import base64
from typing import Literal, Optional

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__
from .augment import AugmentConfig, LabeledSample, apply_pipeline
from .errors import FetaugError, ParameterError, PlacementInfeasibleError, ShapeError
from .evaluate import AcquisitionSeries, pck
from .grid import Mask, Volume
from .heatmap import N_KEYPOINTS, HeatmapStack, KeypointSet, extract, synthesize
from .seeding import substream

__all__ = ["create_app"]


def _b64_of(array: np.ndarray, dtype: str) -> str:
    return base64.b64encode(np.asarray(array, dtype=dtype).ravel(order="F").tobytes()).decode()


def _array_from(data_b64: str, dtype: str, dims) -> np.ndarray:
    try:
        raw = base64.b64decode(data_b64, validate=True)
    except Exception as exc:
        raise ParameterError(f"invalid base64 payload: {exc}") from exc
    dt = np.dtype(dtype)
    count = int(np.prod(dims))
    if len(raw) != count * dt.itemsize:
        raise ShapeError(f"payload holds {len(raw)} bytes, dims {tuple(dims)} need {count * dt.itemsize}")
    return np.ascontiguousarray(np.frombuffer(raw, dtype=dt).reshape(tuple(dims), order="F"))


class VolumePayload(BaseModel):
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    dtype: Literal["float32"] = "float32"
    data_b64: str

    def to_volume(self) -> Volume:
        return Volume(_array_from(self.data_b64, "<f4", self.dims), self.spacing)

    @classmethod
    def from_volume(cls, vol: Volume) -> "VolumePayload":
        return cls(dims=vol.dims, spacing=vol.spacing, data_b64=_b64_of(vol.data, "<f4"))


class MaskPayload(BaseModel):
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    dtype: Literal["uint8"] = "uint8"
    data_b64: str

    def to_mask(self) -> Mask:
        return Mask(_array_from(self.data_b64, "u1", self.dims), self.spacing)

    @classmethod
    def from_mask(cls, mask: Mask) -> "MaskPayload":
        return cls(dims=mask.dims, spacing=mask.spacing, data_b64=_b64_of(mask.data, "u1"))


KeypointTable = list[list[float]]


def _kps_from_table(table: KeypointTable) -> KeypointSet:
    return KeypointSet.from_table(np.asarray(table, dtype=np.float64))


def _kps_to_table(kps: KeypointSet) -> KeypointTable:
    return [[float(v) for v in row] for row in kps.to_table()]


class AugmentConfigModel(BaseModel):
    rotation_prob: float = 0.5
    rotation_deg_range: tuple[float, float] = (-30.0, 30.0)
    scale_prob: float = 0.5
    scale_range: tuple[float, float] = (0.75, 1.25)
    bias_prob: float = 0.5
    bias_order: int = 3
    bias_coeff_range: tuple[float, float] = (-0.3, 0.3)
    gamma_prob: float = 0.5
    log_gamma_range: tuple[float, float] = AugmentConfig().log_gamma_range
    noise_prob: float = 0.5
    noise_sigma_frac_range: tuple[float, float] = (0.0, 0.1)
    spike_prob: float = 0.5
    spike_count_range: tuple[int, int] = (1, 3)
    spike_strength_range: tuple[float, float] = (0.05, 0.15)
    anisotropy_prob: float = 0.5
    anisotropy_factor_range: tuple[float, float] = (1.5, 2.0)
    crop_size: int = 64

    def to_config(self) -> AugmentConfig:
        return AugmentConfig(**self.model_dump())


class PipelineRequest(BaseModel):
    volume: VolumePayload
    keypoints: KeypointTable
    heatmap_sigma: float = 2.0
    provenance: Literal["raw", "inpainted"] = "raw"
    body_mask: Optional[MaskPayload] = None
    config: AugmentConfigModel = Field(default_factory=AugmentConfigModel)
    seed: int
    index: int = 0


class PipelineResponse(BaseModel):
    volume: VolumePayload
    keypoints: KeypointTable
    heatmap_sigma: float
    provenance: str
    log: list[dict]


class SynthesizeRequest(BaseModel):
    keypoints: KeypointTable
    dims: tuple[int, int, int]
    sigma_vox: float = 2.0


class HeatmapPayload(BaseModel):
    dims: tuple[int, int, int]
    sigma_vox: float
    valid: list[bool]
    dtype: Literal["float32"] = "float32"
    channels_b64: str

    def to_stack(self) -> HeatmapStack:
        # Channel-major payload: channel c occupies the c-th x-fastest block.
        nx, ny, nz = self.dims
        try:
            raw = np.frombuffer(base64.b64decode(self.channels_b64, validate=True), dtype="<f4")
        except Exception as exc:
            raise ParameterError(f"invalid base64 payload: {exc}") from exc
        if raw.size != N_KEYPOINTS * nx * ny * nz:
            raise ShapeError(
                f"heatmap payload holds {raw.size} values, "
                f"expected {N_KEYPOINTS} x {nx * ny * nz}"
            )
        per = nx * ny * nz
        data = np.stack(
            [raw[c * per : (c + 1) * per].reshape((nx, ny, nz), order="F")
             for c in range(N_KEYPOINTS)]
        )
        return HeatmapStack(np.ascontiguousarray(data), self.sigma_vox, np.asarray(self.valid))

    @classmethod
    def from_stack(cls, hm: HeatmapStack) -> "HeatmapPayload":
        blocks = b"".join(
            np.asarray(hm.data[c], dtype="<f4").ravel(order="F").tobytes()
            for c in range(N_KEYPOINTS)
        )
        return cls(
            dims=hm.dims,
            sigma_vox=hm.sigma_vox,
            valid=[bool(v) for v in hm.valid],
            channels_b64=base64.b64encode(blocks).decode(),
        )


class ExtractRequest(BaseModel):
    heatmap: HeatmapPayload


class PckFrame(BaseModel):
    prediction: KeypointTable
    ground_truth: KeypointTable


class PckSeries(BaseModel):
    acquisition_id: str
    spacing: tuple[float, float, float]
    ga_weeks: Optional[float] = None
    frames: list[PckFrame]


class PckRequest(BaseModel):
    series: list[PckSeries]
    tau_mm: float = 10.0


def create_app() -> FastAPI:
    app = FastAPI(title="fetaug", version=__version__)

    @app.exception_handler(FetaugError)
    async def fetaug_error_handler(request: Request, exc: FetaugError):
        status = 409 if isinstance(exc, PlacementInfeasibleError) else 400
        return JSONResponse(status_code=status, content={"code": exc.code, "message": str(exc)})

    @app.get("/v1/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/v1/pipeline/apply", response_model=PipelineResponse)
    def pipeline_apply(req: PipelineRequest):
        sample = LabeledSample(
            volume=req.volume.to_volume(),
            keypoints=_kps_from_table(req.keypoints),
            heatmap_sigma=req.heatmap_sigma,
            provenance=req.provenance,
            body_mask=req.body_mask.to_mask() if req.body_mask else None,
        )
        out, log = apply_pipeline(sample, req.config.to_config(), substream(req.seed, req.index))
        return PipelineResponse(
            volume=VolumePayload.from_volume(out.volume),
            keypoints=_kps_to_table(out.keypoints),
            heatmap_sigma=out.heatmap_sigma,
            provenance=out.provenance,
            log=log,
        )

    @app.post("/v1/heatmaps/synthesize", response_model=HeatmapPayload)
    def heatmaps_synthesize(req: SynthesizeRequest):
        hm = synthesize(_kps_from_table(req.keypoints), req.dims, req.sigma_vox)
        return HeatmapPayload.from_stack(hm)

    @app.post("/v1/heatmaps/extract")
    def heatmaps_extract(req: ExtractRequest):
        kps = extract(req.heatmap.to_stack())
        return {"keypoints": _kps_to_table(kps)}

    @app.post("/v1/eval/pck")
    def eval_pck(req: PckRequest):
        series = [
            AcquisitionSeries(
                acquisition_id=s.acquisition_id,
                predictions=[_kps_from_table(f.prediction) for f in s.frames],
                ground_truth=[_kps_from_table(f.ground_truth) for f in s.frames],
                spacing=s.spacing,
                ga_weeks=s.ga_weeks,
            )
            for s in req.series
        ]
        return pck(series, req.tau_mm).to_json_dict()

    return app
