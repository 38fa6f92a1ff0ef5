"""Fetal inpainting: empty uteruses, extract bodies, composite across subjects.

Bank construction replaces the fetal body with synthetic fluid (the fluid
median plus noise), smooths the transition with a masked Gaussian fit so
nothing outside the uterus changes, scales the result inside the uterus,
and crops the body into a reusable entry.

Compositing draws a body and an emptied uterus, scales the body by a
factor alpha about its own center, and rejection-samples a rigid placement
until the warped body mask lies wholly inside the target uterus mask
(shrinking alpha geometrically when a bank pairing is too tight).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .augment import LabeledSample
from .errors import (
    DataError,
    EmptyBankError,
    ParameterError,
    PlacementInfeasibleError,
    SchemaError,
)
from .grid import Mask, RigidTransform, Volume, gaussian_blur, rotation_from_quaternion
from .heatmap import KeypointSet
from .seeding import substream

__all__ = [
    "BodyEntry",
    "UterusEntry",
    "InpaintParams",
    "build_bank_entry",
    "composite_at",
    "sample_composite",
    "bank_mix_stream",
    "save_bank",
    "load_bank",
]

BANK_FORMAT_VERSION = 1


@dataclass(frozen=True)
class BodyEntry:
    """A fetal body cropped to its bounding box.

    ``origin`` is the crop offset in the source volume, so a composite
    with alpha 1 and an identity transform reproduces the original
    placement exactly.  Keypoints are in crop coordinates.
    """

    image: Volume
    body_mask: Mask
    keypoints: KeypointSet
    source_id: str
    origin: tuple[int, int, int]

    def __post_init__(self):
        if self.image.dims != self.body_mask.dims:
            raise ParameterError("body image and mask dims differ")
        if self.body_mask.count() == 0:
            raise DataError("body mask is empty")
        vis = self.keypoints.visible
        if vis.any() and not self.keypoints.inside(self.image.dims)[vis].all():
            raise DataError("visible keypoints fall outside the body crop")

    @property
    def center(self) -> np.ndarray:
        """Body center in source-volume coordinates."""
        return np.asarray(self.origin, dtype=np.float64) + self.image.center


@dataclass(frozen=True)
class UterusEntry:
    """An emptied uterus image with its mask and build provenance."""

    image: Volume
    uterus_mask: Mask
    source_id: str
    fluid_median: float
    gamma: float

    def __post_init__(self):
        if self.image.dims != self.uterus_mask.dims:
            raise ParameterError("uterus image and mask dims differ")
        if self.uterus_mask.count() == 0:
            raise DataError("uterus mask is empty")


@dataclass(frozen=True)
class InpaintParams:
    sigma_eps: float = 0.05        # fluid noise std, as a fraction of the fluid median
    sigma_u_vox: float = 1.0       # blending kernel sigma over the uterus
    gamma_range: tuple[float, float] = (0.8, 1.2)
    alpha_range: tuple[float, float] = (0.5, 1.0)
    base_sigma: float = 2.0        # heatmap sigma before alpha coupling
    max_attempts: int = 20
    alpha_backoff: float = 0.9

    def __post_init__(self):
        if self.sigma_eps < 0 or self.sigma_u_vox < 0:
            raise ParameterError("sigma_eps and sigma_u_vox must be >= 0")
        for name, (lo, hi) in (("gamma", self.gamma_range), ("alpha", self.alpha_range)):
            if not (0 < lo <= hi):
                raise ParameterError(f"{name} range must be positive and non-empty")
        if self.max_attempts < 1:
            raise ParameterError("max_attempts must be >= 1")
        if not (0 < self.alpha_backoff < 1):
            raise ParameterError("alpha_backoff must be in (0, 1)")
        if not (self.base_sigma > 0):
            raise ParameterError("base_sigma must be > 0")


def _mask_bbox(mask: Mask) -> tuple[np.ndarray, np.ndarray]:
    idx = np.argwhere(mask.bool)
    return idx.min(axis=0), idx.max(axis=0)


def build_bank_entry(
    image: Volume,
    body: Mask,
    fluid: Mask,
    kps: KeypointSet,
    params: InpaintParams,
    rng: np.random.Generator,
    source_id: str = "",
) -> tuple[UterusEntry, BodyEntry]:
    """Empty one subject's uterus and crop out its body.

    Steps: fluid median -> synthetic fluid in the vacated body -> masked
    blur over the uterus -> gamma scaling inside the uterus.  Voxels
    outside the uterus are never modified.
    """
    if image.dims != body.dims or image.dims != fluid.dims:
        raise ParameterError("image and mask dims differ")
    if fluid.count() == 0:
        raise DataError("fluid mask is empty: no fluid median definable")
    if body.count() == 0:
        raise DataError("body mask is empty")
    body_b = body.bool
    fluid_b = fluid.bool
    if (body_b & fluid_b).any():
        raise DataError("body and fluid masks overlap")

    fluid_median = float(np.median(image.data[fluid_b]))
    uterus = Mask(body_b | fluid_b, image.spacing)

    filled = image.data.astype(np.float64)
    n_body = int(body_b.sum())
    noise = rng.normal(0.0, params.sigma_eps * fluid_median, size=n_body)
    filled[body_b] = fluid_median + noise

    blended = gaussian_blur(Volume(filled, image.spacing), params.sigma_u_vox, uterus)

    gamma = float(rng.uniform(*params.gamma_range))
    out = blended.data.copy()
    out[uterus.bool] = (out[uterus.bool].astype(np.float64) * gamma).astype(np.float32)
    uterus_entry = UterusEntry(
        image=Volume(out, image.spacing),
        uterus_mask=uterus,
        source_id=source_id,
        fluid_median=fluid_median,
        gamma=gamma,
    )

    lo, hi = _mask_bbox(body)
    sl = tuple(slice(int(lo[i]), int(hi[i]) + 1) for i in range(3))
    crop_kps = kps.map_positions(lambda p: p - lo.astype(np.float64))
    body_entry = BodyEntry(
        image=Volume(image.data[sl].copy(), image.spacing),
        body_mask=Mask(body.data[sl].copy(), image.spacing),
        keypoints=crop_kps,
        source_id=source_id,
        origin=(int(lo[0]), int(lo[1]), int(lo[2])),
    )
    return uterus_entry, body_entry


def _composite_map(body: BodyEntry, alpha: float, transform: RigidTransform):
    """Pull-back (matrix, offset) from uterus voxels into body-crop space.

    Forward map: crop point p -> T(c + alpha * (p + origin - c)) with c
    the body center in source coordinates.
    """
    inv = transform.inverse()
    c = body.center
    origin = np.asarray(body.origin, dtype=np.float64)
    # p_crop = (T^-1(q) - c) / alpha + c - origin
    m = inv.rotation / alpha
    shift = inv.center + inv.translation - inv.rotation @ inv.center
    offset = (shift - c) / alpha + c - origin
    return m, offset


def _pull_values(src: np.ndarray, matrix, offset, dims, order: int) -> np.ndarray:
    from . import _kernels

    mat = np.ascontiguousarray(matrix, dtype=np.float64)
    off = np.ascontiguousarray(offset, dtype=np.float64)
    out = np.empty(tuple(dims), dtype=src.dtype)
    if order == 0:
        _kernels.nearest_pullback(src, mat, off, src.dtype.type(0), out)
    else:
        _kernels.trilinear_pullback(src, mat, off, src.dtype.type(0), out)
    return out


def forward_map(body: BodyEntry, alpha: float, transform: RigidTransform):
    """Point map for keypoints matching :func:`_composite_coords`."""
    c = body.center
    origin = np.asarray(body.origin, dtype=np.float64)

    def fn(points: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        scaled = c + alpha * (p + origin - c)
        out = transform.apply(scaled)
        return out if np.asarray(points).ndim > 1 else out[0]

    return fn


def composite_at(
    body: BodyEntry,
    uterus: UterusEntry,
    alpha: float,
    transform: RigidTransform,
    base_sigma: float = 2.0,
    check_containment: bool = True,
) -> LabeledSample:
    """Deterministic composite of one body into one uterus.

    The warped (nearest) body mask must lie wholly inside the uterus mask;
    the image blend feathers one voxel via fractional trilinear mask
    weights, restricted to the uterus so nothing outside it changes.
    """
    if alpha <= 0:
        raise ParameterError(f"alpha must be > 0, got {alpha}")
    dims = uterus.image.dims
    matrix, offset = _composite_map(body, alpha, transform)
    hard = _pull_values(body.body_mask.data, matrix, offset, dims, order=0).astype(bool)
    if check_containment and bool((hard & ~uterus.uterus_mask.bool).any()):
        raise PlacementInfeasibleError("warped body mask leaves the uterus")
    weight = _pull_values(body.body_mask.data.astype(np.float64), matrix, offset, dims, order=1)
    weight = np.clip(weight, 0.0, 1.0) * uterus.uterus_mask.data
    body_vals = _pull_values(body.image.data.astype(np.float64), matrix, offset, dims, order=1)
    out = uterus.image.data.astype(np.float64) * (1.0 - weight) + body_vals * weight
    kps = body.keypoints.map_positions(forward_map(body, alpha, transform), dims=dims)
    return LabeledSample(
        volume=Volume(out, uterus.image.spacing),
        keypoints=kps,
        heatmap_sigma=base_sigma * alpha,
        provenance="inpainted",
        acquisition_id=f"{body.source_id}+{uterus.source_id}",
        uterus_mask=uterus.uterus_mask,
    )


@dataclass(frozen=True)
class CompositeDraw:
    """The accepted placement parameters of one composite."""

    body_index: int
    uterus_index: int
    alpha: float
    transform: RigidTransform


def draw_composite(
    bodies: list[BodyEntry],
    uteri: list[UterusEntry],
    params: InpaintParams,
    rng: np.random.Generator,
    max_backoffs: int = 10,
) -> tuple[LabeledSample, CompositeDraw]:
    """Draw a (body, uterus) pair and a feasible scaled rigid placement.

    Rotations are uniform over all orientations (normalized Gaussian
    quaternions); translations place the body center uniformly inside the
    uterus-mask bounding box.  After ``params.max_attempts`` rejections
    alpha is multiplied by ``alpha_backoff``; after ``max_backoffs``
    rounds the placement is declared infeasible.
    """
    if not bodies or not uteri:
        raise EmptyBankError("composite requested from an empty bank")
    bi = int(rng.integers(0, len(bodies)))
    ui = int(rng.integers(0, len(uteri)))
    body = bodies[bi]
    uterus = uteri[ui]
    alpha = float(rng.uniform(*params.alpha_range))
    lo, hi = _mask_bbox(uterus.uterus_mask)
    c = body.center

    for _ in range(max_backoffs + 1):
        for _ in range(params.max_attempts):
            rotation = rotation_from_quaternion(rng.normal(size=4))
            target = rng.uniform(lo, hi + 1.0) - 0.5
            transform = RigidTransform(rotation, target - c, c)
            try:
                sample = composite_at(body, uterus, alpha, transform, params.base_sigma)
            except PlacementInfeasibleError:
                continue
            return sample, CompositeDraw(bi, ui, alpha, transform)
        alpha *= params.alpha_backoff
    raise PlacementInfeasibleError(
        f"no placement for body {body.source_id!r} in uterus {uterus.source_id!r} "
        f"after {max_backoffs} alpha backoffs"
    )


def sample_composite(
    bodies: list[BodyEntry],
    uteri: list[UterusEntry],
    params: InpaintParams,
    rng: np.random.Generator,
    max_backoffs: int = 10,
) -> LabeledSample:
    """:func:`draw_composite` without the placement record."""
    return draw_composite(bodies, uteri, params, rng, max_backoffs)[0]


def bank_mix_stream(raw_source, composite_source, fraction: float, master_seed: int, count: int):
    """Yield samples, each inpainted with probability ``fraction``.

    ``raw_source`` and ``composite_source`` are callables taking a
    Generator.  The Bernoulli gate and the source both draw from the
    per-index substream of ``master_seed``, so any prefix of the stream is
    reproducible independent of consumption order.
    """
    if not (0.0 <= fraction <= 1.0):
        raise ParameterError(f"fraction must be in [0, 1], got {fraction}")
    for index in range(count):
        rng = substream(master_seed, index)
        if rng.random() < fraction:
            yield composite_source(rng)
        else:
            yield raw_source(rng)


# ---------------------------------------------------------------------------
# Bank persistence: one image/mask pair per entry plus a JSON manifest.
# ---------------------------------------------------------------------------


def save_bank(path, bodies: list[BodyEntry], uteri: list[UterusEntry], params: InpaintParams) -> None:
    from . import fileio, nifti

    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    body_rows = []
    for i, b in enumerate(bodies):
        stem = f"body_{i:04d}"
        nifti.write_volume(b.image, root / f"{stem}_image.nii")
        nifti.write_mask(b.body_mask, root / f"{stem}_mask.nii")
        body_rows.append(
            {
                "id": b.source_id,
                "image": f"{stem}_image.nii",
                "mask": f"{stem}_mask.nii",
                "origin": list(b.origin),
                "keypoints": b.keypoints.to_dict(),
            }
        )
    uterus_rows = []
    for i, u in enumerate(uteri):
        stem = f"uterus_{i:04d}"
        nifti.write_volume(u.image, root / f"{stem}_image.nii")
        nifti.write_mask(u.uterus_mask, root / f"{stem}_mask.nii")
        uterus_rows.append(
            {
                "id": u.source_id,
                "image": f"{stem}_image.nii",
                "mask": f"{stem}_mask.nii",
                "fluid_median": u.fluid_median,
                "gamma": u.gamma,
            }
        )
    manifest = {
        "format_version": BANK_FORMAT_VERSION,
        "params": asdict(params),
        "bodies": body_rows,
        "uteri": uterus_rows,
    }
    fileio.write_json(root / "manifest.json", manifest)


def load_bank(path) -> tuple[list[BodyEntry], list[UterusEntry], InpaintParams]:
    from . import fileio, nifti

    root = Path(path)
    manifest = fileio.read_json(root / "manifest.json")
    if manifest.get("format_version") != BANK_FORMAT_VERSION:
        raise SchemaError(
            f"unsupported bank format version {manifest.get('format_version')!r}"
        )
    raw_params = dict(manifest["params"])
    for key in ("gamma_range", "alpha_range"):
        raw_params[key] = tuple(raw_params[key])
    params = InpaintParams(**raw_params)
    bodies = [
        BodyEntry(
            image=nifti.read_volume(root / row["image"]),
            body_mask=nifti.read_mask(root / row["mask"]),
            keypoints=KeypointSet.from_dict(row["keypoints"]),
            source_id=row["id"],
            origin=tuple(int(v) for v in row["origin"]),
        )
        for row in manifest["bodies"]
    ]
    uteri = [
        UterusEntry(
            image=nifti.read_volume(root / row["image"]),
            uterus_mask=nifti.read_mask(root / row["mask"]),
            source_id=row["id"],
            fluid_median=float(row["fluid_median"]),
            gamma=float(row["gamma"]),
        )
        for row in manifest["uteri"]
    ]
    return bodies, uteri, params
