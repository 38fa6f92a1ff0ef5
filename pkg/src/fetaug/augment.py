"""Stochastic MRI augmentations over labeled samples.

Every op takes an explicit ``numpy.random.Generator``; parameter draws
happen in a fixed documented order so a given (input, config, seed) is
bit-reproducible.  Intensity ops never touch keypoints, masks, dims, or
spacing.  Geometric ops co-transform keypoints (and the heatmap sigma for
scaling).  Probability-0 or null-parameter draws are exact identities.

Pipeline order: geometric (rotate, scale) -> intensity (bias, gamma,
noise, spike) -> anisotropy -> crop.  The crop always runs.  Samples with
``inpainted`` provenance receive the crop only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import DataError, ParameterError, ShapeError
from .grid import (
    Mask,
    RigidTransform,
    Volume,
    affine_pullback,
    rescale_grid,
    rotation_from_euler_deg,
    scale_about_center,
    warp_rigid,
)
from .heatmap import KeypointSet

__all__ = [
    "LabeledSample",
    "AugmentConfig",
    "additive_noise",
    "bias_field",
    "gamma_adjust",
    "kspace_spike",
    "anisotropize",
    "rotate_sample",
    "scale_sample",
    "crop_sample",
    "apply_pipeline",
]

LOG_GAMMA_HARD_BOUND = (math.log(0.5), math.log(2.0))
DEFAULT_LOG_GAMMA = (-math.log(1.5), math.log(1.5))


@dataclass(frozen=True)
class LabeledSample:
    """A volume with its keypoints, heatmap sigma, and optional masks."""

    volume: Volume
    keypoints: KeypointSet
    heatmap_sigma: float = 2.0
    provenance: str = "raw"
    acquisition_id: str = ""
    body_mask: Optional[Mask] = None
    fluid_mask: Optional[Mask] = None
    uterus_mask: Optional[Mask] = None

    def __post_init__(self):
        if not (self.heatmap_sigma > 0):
            raise ParameterError(f"heatmap_sigma must be > 0, got {self.heatmap_sigma}")
        if self.provenance not in ("raw", "inpainted"):
            raise ParameterError(f"provenance must be raw|inpainted, got {self.provenance!r}")
        for name in ("body_mask", "fluid_mask", "uterus_mask"):
            m = getattr(self, name)
            if m is not None and m.dims != self.volume.dims:
                raise ShapeError(f"{name} dims {m.dims} do not match volume {self.volume.dims}")
        vis = self.keypoints.visible
        if vis.any() and not self.keypoints.inside(self.volume.dims)[vis].all():
            raise ParameterError("visible keypoints must lie inside the volume grid")

    def masks(self) -> dict[str, Mask]:
        return {
            name: m
            for name, m in (
                ("body_mask", self.body_mask),
                ("fluid_mask", self.fluid_mask),
                ("uterus_mask", self.uterus_mask),
            )
            if m is not None
        }


def _check_range(name, rng_pair, hard_lo, hard_hi, lo_open=False):
    lo, hi = float(rng_pair[0]), float(rng_pair[1])
    if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
        raise ParameterError(f"{name} range must be a non-empty finite interval, got {rng_pair}")
    if lo < hard_lo or hi > hard_hi or (lo_open and lo <= hard_lo):
        raise ParameterError(f"{name} range {rng_pair} outside hard bounds [{hard_lo}, {hard_hi}]")
    return (lo, hi)


@dataclass(frozen=True)
class AugmentConfig:
    """Per-op fire probabilities and parameter ranges.

    Defaults are conservative and fully configurable; hard bounds are
    enforced at construction.
    """

    rotation_prob: float = 0.5
    rotation_deg_range: tuple[float, float] = (-30.0, 30.0)
    scale_prob: float = 0.5
    scale_range: tuple[float, float] = (0.75, 1.25)
    bias_prob: float = 0.5
    bias_order: int = 3
    bias_coeff_range: tuple[float, float] = (-0.3, 0.3)
    gamma_prob: float = 0.5
    log_gamma_range: tuple[float, float] = DEFAULT_LOG_GAMMA
    noise_prob: float = 0.5
    noise_sigma_frac_range: tuple[float, float] = (0.0, 0.1)
    spike_prob: float = 0.5
    spike_count_range: tuple[int, int] = (1, 3)
    spike_strength_range: tuple[float, float] = (0.05, 0.15)
    anisotropy_prob: float = 0.5
    anisotropy_factor_range: tuple[float, float] = (1.5, 2.0)
    crop_size: int = 64

    def __post_init__(self):
        for name in (
            "rotation_prob",
            "scale_prob",
            "bias_prob",
            "gamma_prob",
            "noise_prob",
            "spike_prob",
            "anisotropy_prob",
        ):
            p = getattr(self, name)
            if not (0.0 <= p <= 1.0):
                raise ParameterError(f"{name} must be in [0, 1], got {p}")
        _check_range("rotation_deg", self.rotation_deg_range, -180.0, 180.0)
        _check_range("scale", self.scale_range, 0.5, 2.0)
        _check_range("bias_coeff", self.bias_coeff_range, -2.0, 2.0)
        _check_range("log_gamma", self.log_gamma_range, *LOG_GAMMA_HARD_BOUND)
        _check_range("noise_sigma_frac", self.noise_sigma_frac_range, 0.0, 0.3)
        _check_range("spike_strength", self.spike_strength_range, 0.0, 1.0)
        _check_range("anisotropy_factor", self.anisotropy_factor_range, 1.0, 4.0)
        lo, hi = self.spike_count_range
        if not (0 <= lo <= hi):
            raise ParameterError(f"spike count range invalid: {self.spike_count_range}")
        if not (1 <= self.bias_order <= 4):
            raise ParameterError(f"bias order must be in [1, 4], got {self.bias_order}")
        if self.crop_size < 1:
            raise ParameterError(f"crop size must be >= 1, got {self.crop_size}")


# ---------------------------------------------------------------------------
# Deterministic kernels (parameters in, no RNG).  The stochastic ops below
# are draw + kernel; the pipeline uses the same pieces and logs the draws.
# ---------------------------------------------------------------------------


def robust_range(vol: Volume) -> tuple[float, float]:
    """(p1, p99) as lower order statistics (single partition pass)."""
    flat = vol.data.ravel()
    k1 = int(0.01 * (flat.size - 1))
    k99 = int(0.99 * (flat.size - 1))
    part = np.partition(flat, (k1, k99))
    return float(part[k1]), float(part[k99])


def background_level(vol: Volume) -> float:
    """Fill level for warps: 1st percentile of the intensities."""
    return robust_range(vol)[0]


def noise_sigma(vol: Volume, frac: float) -> float:
    """Noise std as a fraction of the robust (p99 - p1) intensity range."""
    p1, p99 = robust_range(vol)
    return float(frac) * (p99 - p1)


def add_noise(vol: Volume, sigma: float, rng: np.random.Generator) -> Volume:
    if sigma == 0.0:
        return vol
    noise = rng.standard_normal(size=vol.dims, dtype=np.float32)
    return vol.with_data(vol.data + np.float32(sigma) * noise)


def bias_monomials(order: int) -> list[tuple[int, int, int]]:
    """Exponent triples (i, j, k) with i + j + k <= order, fixed order."""
    return [
        (i, j, k)
        for i in range(order + 1)
        for j in range(order + 1 - i)
        for k in range(order + 1 - i - j)
    ]


def apply_bias_field(vol: Volume, order: int, coeffs: np.ndarray) -> Volume:
    """Multiply by exp(P(x_hat)) for a polynomial over [-1, 1]^3 coords.

    The monomials sharing an x power collapse into 2D polynomials in
    (y, z); a JIT Horner pass over the x powers then applies the field in
    a single sweep.
    """
    monos = bias_monomials(order)
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape != (len(monos),):
        raise ParameterError(f"bias field of order {order} needs {len(monos)} coefficients")
    if not coeffs.any():
        return vol
    nx, ny, nz = vol.dims
    hats = [
        (2.0 * np.arange(n, dtype=np.float64) / (n - 1) - 1.0) if n > 1 else np.zeros(n)
        for n in (nx, ny, nz)
    ]
    from . import _kernels

    planes = np.zeros((order + 1, ny, nz), dtype=np.float64)
    for (i, j, k), c in zip(monos, coeffs):
        if c != 0.0:
            planes[i] += c * np.outer(hats[1] ** j, hats[2] ** k)
    out = np.empty(vol.dims, dtype=np.float32)
    _kernels.bias_multiply(vol.data, hats[0], planes, out)
    return vol.with_data(out)


def apply_gamma(vol: Volume, gamma: float) -> Volume:
    """Min-max normalize, exponentiate, restore the original range.

    Endpoints are preserved exactly; a constant volume is returned as-is.
    """
    if gamma <= 0:
        raise ParameterError(f"gamma must be > 0, got {gamma}")
    if gamma == 1.0:
        return vol
    vmin = vol.data.min()
    vmax = vol.data.max()
    if vmax == vmin:
        return vol
    span = vmax - vmin
    norm = (vol.data - vmin) / span
    return vol.with_data(norm ** np.float32(gamma) * span + vmin)


def hermitian_partner(coord, dims) -> tuple[int, ...]:
    return tuple(int((-c) % n) for c, n in zip(coord, dims))


def inject_spikes(vol: Volume, coords, strengths, phases) -> Volume:
    """Add complex k-space spikes with their Hermitian partners.

    Each spike has magnitude ``strength * max |spectrum|``; coordinates
    are full-spectrum bins and must not be self-conjugate (DC or pure
    Nyquist), so the result stays real.  Runs on the half spectrum
    (rfftn): a spike whose mirror falls in the unstored half is implied
    by the storage symmetry, one landing on a self-mirrored z plane gets
    its (x, y) partner written explicitly.
    """
    import scipy.fft

    coords = [tuple(int(c) for c in p) for p in coords]
    strengths = np.asarray(strengths, dtype=np.float64)
    phases = np.asarray(phases, dtype=np.float64)
    if len(coords) == 0 or not strengths.any():
        return vol
    half = scipy.fft.rfftn(vol.data)  # complex64 for float32 input
    peak = np.abs(half).max()
    stored_z = half.shape[2]
    for point, r, phi in zip(coords, strengths, phases):
        partner = hermitian_partner(point, vol.dims)
        if partner == point:
            raise ParameterError(f"spike coordinate {point} is self-conjugate")
        value = (r * peak * np.exp(1j * phi)).astype(np.complex64)
        if partner[2] == point[2]:
            half[point] += value
            half[partner] += np.conj(value)
        elif point[2] < stored_z:
            half[point] += value
        else:
            half[partner] += np.conj(value)
    return vol.with_data(scipy.fft.irfftn(half, s=vol.dims))


def resample_axis_down_up(vol: Volume, axis: int, factor: float) -> Volume:
    """Thick-slice simulation: pool down along one axis, interpolate back.

    Downsampling is area-averaged (each low-resolution slab integrates the
    signal across its extent — the anti-aliased thick-slice profile; point
    sampling would alias instead of losing information), upsampling is
    linear at the slab centers; grid dims are unchanged.
    """
    from . import _kernels

    if axis not in (0, 1, 2):
        raise ParameterError(f"axis must be 0..2, got {axis}")
    if factor < 1.0:
        raise ParameterError(f"anisotropy factor must be >= 1, got {factor}")
    n = vol.dims[axis]
    m = max(2, int(round(n / factor)))
    if m >= n:
        return vol
    width = n / m
    rows = np.ascontiguousarray(np.moveaxis(vol.data, axis, 2).reshape(-1, n).astype(np.float64))
    pooled = np.empty((rows.shape[0], m), dtype=np.float64)
    _kernels.axis_box_downsample(rows, width, pooled)
    # Voxel x sits at slab coordinate (x + 0.5) / width - 0.5.
    pos = (np.arange(n, dtype=np.float64) + 0.5) / width - 0.5
    up = np.empty((rows.shape[0], n), dtype=np.float64)
    _kernels.axis_lerp(pooled, pos, up)
    moved_shape = np.moveaxis(vol.data, axis, 2).shape
    out = np.moveaxis(up.reshape(moved_shape), 2, axis)
    return vol.with_data(np.ascontiguousarray(out))


# ---------------------------------------------------------------------------
# Stochastic ops
# ---------------------------------------------------------------------------


def _uniform(rng, lo, hi) -> float:
    return float(rng.uniform(lo, hi)) if hi > lo else float(lo)


def additive_noise(s: LabeledSample, rng: np.random.Generator, sigma_frac_range=(0.0, 0.1)) -> LabeledSample:
    """Add i.i.d. Gaussian noise scaled to the robust intensity range."""
    lo, hi = _check_range("noise_sigma_frac", sigma_frac_range, 0.0, 0.3)
    frac = _uniform(rng, lo, hi)
    sigma = noise_sigma(s.volume, frac)
    return replace(s, volume=add_noise(s.volume, sigma, rng))


def bias_field(s: LabeledSample, rng: np.random.Generator, order: int = 3, coeff_range=(-0.3, 0.3)) -> LabeledSample:
    """Multiplicative exp-polynomial shading (strictly positive field)."""
    if not (1 <= order <= 4):
        raise ParameterError(f"bias order must be in [1, 4], got {order}")
    lo, hi = coeff_range
    coeffs = rng.uniform(lo, hi, size=len(bias_monomials(order)))
    return replace(s, volume=apply_bias_field(s.volume, order, coeffs))


def gamma_adjust(s: LabeledSample, rng: np.random.Generator, log_gamma_range=DEFAULT_LOG_GAMMA) -> LabeledSample:
    lo, hi = _check_range("log_gamma", log_gamma_range, *LOG_GAMMA_HARD_BOUND)
    gamma = math.exp(_uniform(rng, lo, hi))
    return replace(s, volume=apply_gamma(s.volume, gamma))


def _draw_spike_coords(rng: np.random.Generator, dims, count: int) -> list[tuple[int, int, int]]:
    # Rejects self-conjugate bins (all components in {0, n/2}) so every
    # spike has a distinct Hermitian partner.
    out: list[tuple[int, int, int]] = []
    while len(out) < count:
        c = tuple(int(rng.integers(0, n)) for n in dims)
        if hermitian_partner(c, dims) == c:
            continue
        out.append(c)
    return out


def kspace_spike(
    s: LabeledSample,
    rng: np.random.Generator,
    n_spikes_range=(1, 3),
    strength_range=(0.05, 0.15),
) -> LabeledSample:
    """Inject Hermitian spike pairs into the 3D spectrum."""
    lo, hi = n_spikes_range
    count = int(rng.integers(lo, hi + 1))
    if count == 0:
        return s
    coords = _draw_spike_coords(rng, s.volume.dims, count)
    strengths = rng.uniform(strength_range[0], strength_range[1], size=count)
    phases = rng.uniform(0.0, 2.0 * math.pi, size=count)
    return replace(s, volume=inject_spikes(s.volume, coords, strengths, phases))


def anisotropize(s: LabeledSample, rng: np.random.Generator, factor_range=(1.5, 2.0)) -> LabeledSample:
    """Thick-slice simulation along one random axis; keypoints untouched."""
    lo, hi = _check_range("anisotropy_factor", factor_range, 1.0, 4.0)
    axis = int(rng.integers(0, 3))
    factor = _uniform(rng, lo, hi)
    return replace(s, volume=resample_axis_down_up(s.volume, axis, factor))


def rotate_by(s: LabeledSample, angles_deg) -> LabeledSample:
    """Rigid rotation about the volume center; keypoints co-transformed."""
    if all(a == 0.0 for a in angles_deg):
        return s
    t = RigidTransform.from_euler_deg(angles_deg, s.volume.center)
    fill = background_level(s.volume)
    vol = warp_rigid(s.volume, t, "trilinear", fill=fill)
    masks = {name: warp_rigid(m, t, "nearest") for name, m in s.masks().items()}
    kps = s.keypoints.map_positions(t.apply, dims=vol.dims)
    return replace(s, volume=vol, keypoints=kps, **masks)


def rotate_sample(s: LabeledSample, rng: np.random.Generator, angle_range_deg=(-30.0, 30.0)) -> LabeledSample:
    lo, hi = _check_range("rotation_deg", angle_range_deg, -180.0, 180.0)
    angles = [_uniform(rng, lo, hi) for _ in range(3)]
    return rotate_by(s, angles)


def scale_by(s: LabeledSample, factor: float) -> LabeledSample:
    """Anatomical scaling about the center; heatmap sigma scales along."""
    if factor == 1.0:
        return s
    vol = rescale_grid(s.volume, factor, "trilinear", fill=background_level(s.volume))
    masks = {name: rescale_grid(m, factor, "nearest") for name, m in s.masks().items()}
    center = s.volume.center
    kps = s.keypoints.map_positions(
        lambda p: scale_about_center(p, center, factor), dims=vol.dims
    )
    return replace(
        s, volume=vol, keypoints=kps, heatmap_sigma=s.heatmap_sigma * factor, **masks
    )


def scale_sample(s: LabeledSample, rng: np.random.Generator, factor_range=(0.75, 1.25)) -> LabeledSample:
    lo, hi = _check_range("scale", factor_range, 0.5, 2.0)
    return scale_by(s, _uniform(rng, lo, hi))


def _keypoint_bbox(s: LabeledSample) -> tuple[np.ndarray, np.ndarray]:
    if s.body_mask is not None and s.body_mask.count() > 0:
        idx = np.argwhere(s.body_mask.bool)
        return idx.min(axis=0).astype(np.float64), idx.max(axis=0).astype(np.float64)
    if not s.keypoints.visible.any():
        raise DataError("crop needs a body mask or at least one visible keypoint")
    pos = s.keypoints.positions[s.keypoints.visible]
    return pos.min(axis=0), pos.max(axis=0)


def _pad_to(s: LabeledSample, size: int) -> tuple[LabeledSample, np.ndarray]:
    """Pad with background / zeros so every dim is at least ``size``."""
    dims = np.asarray(s.volume.dims)
    need = np.maximum(size - dims, 0)
    if not need.any():
        return s, np.zeros(3, dtype=np.int64)
    lo = need // 2
    hi = need - lo
    pad = [(int(lo[i]), int(hi[i])) for i in range(3)]
    fill = background_level(s.volume)
    vol = Volume(np.pad(s.volume.data, pad, constant_values=np.float32(fill)), s.volume.spacing)
    masks = {
        name: Mask(np.pad(m.data, pad, constant_values=0), m.spacing)
        for name, m in s.masks().items()
    }
    kps = s.keypoints.map_positions(lambda p: p + lo.astype(np.float64), dims=vol.dims)
    return replace(s, volume=vol, keypoints=kps, **masks), lo.astype(np.int64)


def crop_at(s: LabeledSample, start, size: int) -> LabeledSample:
    start = np.asarray(start, dtype=np.int64)
    sl = tuple(slice(int(start[i]), int(start[i]) + size) for i in range(3))
    vol = Volume(s.volume.data[sl].copy(), s.volume.spacing)
    masks = {name: Mask(m.data[sl].copy(), m.spacing) for name, m in s.masks().items()}
    kps = s.keypoints.map_positions(lambda p: p - start.astype(np.float64), dims=vol.dims)
    return replace(s, volume=vol, keypoints=kps, **masks)


def crop_window(s: LabeledSample, rng: np.random.Generator, size: int) -> tuple[LabeledSample, np.ndarray]:
    """Draw the jittered crop start (after padding if needed)."""
    s, _ = _pad_to(s, size)
    dims = np.asarray(s.volume.dims)
    lo, hi = _keypoint_bbox(s)
    center = (lo + hi) / 2.0
    ideal = np.round(center - (size - 1) / 2.0).astype(np.int64)
    jitter = rng.integers(-(size // 4), size // 4 + 1, size=3)
    start = np.clip(ideal + jitter, 0, dims - size)
    return s, start


def crop_sample(s: LabeledSample, rng: np.random.Generator, size: int = 64) -> LabeledSample:
    """Fetus-centered jittered crop; outside keypoints become invisible."""
    if size < 1:
        raise ParameterError(f"crop size must be >= 1, got {size}")
    padded, start = crop_window(s, rng, size)
    return crop_at(padded, start, size)


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------


def geometric_by(s: LabeledSample, angles_deg, factor: float) -> LabeledSample:
    """Rotation about the center composed with scaling, in one resample.

    Equals ``scale_by(rotate_by(s, angles), factor)`` up to the single
    interpolation (one pass avoids compounding resampling blur); with only
    one of the two active it reduces exactly to the corresponding op.
    """
    rotating = any(a != 0.0 for a in angles_deg)
    if not rotating and factor == 1.0:
        return s
    center = s.volume.center
    rot = rotation_from_euler_deg(angles_deg) if rotating else np.eye(3)
    # Pull-back p = R^T (q - c) / factor + c.
    matrix = rot.T / factor
    offset = center - matrix @ center
    fill = background_level(s.volume)
    vol = affine_pullback(s.volume, matrix, offset, "trilinear", fill)
    masks = {name: affine_pullback(m, matrix, offset, "nearest", 0.0)
             for name, m in s.masks().items()}

    def forward(points: np.ndarray) -> np.ndarray:
        return center + factor * ((points - center) @ rot.T)

    kps = s.keypoints.map_positions(forward, dims=vol.dims)
    return replace(
        s, volume=vol, keypoints=kps, heatmap_sigma=s.heatmap_sigma * factor, **masks
    )


def apply_pipeline(
    s: LabeledSample, cfg: AugmentConfig, rng: np.random.Generator
) -> tuple[LabeledSample, list[dict]]:
    """Run the configured augmentations in the documented fixed order.

    Order: rotate, scale, bias, gamma, noise, spike, anisotropy, then the
    unconditional crop.  When both rotation and scale fire their warps are
    composed into a single resample (see :func:`geometric_by`).  Returns
    the final sample and a JSON-friendly log of applied ops with their
    drawn parameters.  Inpainted samples receive the crop only.
    """
    log: list[dict] = []

    def crop(sample: LabeledSample) -> LabeledSample:
        padded, start = crop_window(sample, rng, cfg.crop_size)
        log.append({"op": "crop", "start": [int(v) for v in start], "size": cfg.crop_size})
        return crop_at(padded, start, cfg.crop_size)

    if s.provenance == "inpainted":
        return crop(s), log

    angles = None
    if rng.random() < cfg.rotation_prob:
        lo, hi = cfg.rotation_deg_range
        angles = [_uniform(rng, lo, hi) for _ in range(3)]
    factor = None
    if rng.random() < cfg.scale_prob:
        factor = _uniform(rng, *cfg.scale_range)
    if angles is not None or factor is not None:
        s = geometric_by(s, angles if angles is not None else (0.0, 0.0, 0.0),
                         factor if factor is not None else 1.0)
        if angles is not None:
            log.append({"op": "rotate", "angles_deg": angles})
        if factor is not None:
            log.append({"op": "scale", "factor": factor})
    if rng.random() < cfg.bias_prob:
        coeffs = rng.uniform(*cfg.bias_coeff_range, size=len(bias_monomials(cfg.bias_order)))
        s = replace(s, volume=apply_bias_field(s.volume, cfg.bias_order, coeffs))
        log.append({"op": "bias_field", "order": cfg.bias_order, "coeffs": coeffs.tolist()})
    if rng.random() < cfg.gamma_prob:
        gamma = math.exp(_uniform(rng, *cfg.log_gamma_range))
        s = replace(s, volume=apply_gamma(s.volume, gamma))
        log.append({"op": "gamma", "gamma": gamma})
    if rng.random() < cfg.noise_prob:
        frac = _uniform(rng, *cfg.noise_sigma_frac_range)
        sigma = noise_sigma(s.volume, frac)
        s = replace(s, volume=add_noise(s.volume, sigma, rng))
        log.append({"op": "noise", "fraction": frac, "sigma": sigma})
    if rng.random() < cfg.spike_prob:
        lo_n, hi_n = cfg.spike_count_range
        count = int(rng.integers(lo_n, hi_n + 1))
        if count > 0:
            coords = _draw_spike_coords(rng, s.volume.dims, count)
            strengths = rng.uniform(*cfg.spike_strength_range, size=count)
            phases = rng.uniform(0.0, 2.0 * math.pi, size=count)
            s = replace(s, volume=inject_spikes(s.volume, coords, strengths, phases))
            log.append(
                {
                    "op": "spike",
                    "coords": [list(c) for c in coords],
                    "strengths": strengths.tolist(),
                    "phases": phases.tolist(),
                }
            )
    if rng.random() < cfg.anisotropy_prob:
        axis = int(rng.integers(0, 3))
        factor = _uniform(rng, *cfg.anisotropy_factor_range)
        s = replace(s, volume=resample_axis_down_up(s.volume, axis, factor))
        log.append({"op": "anisotropy", "axis": axis, "factor": factor})

    return crop(s), log
