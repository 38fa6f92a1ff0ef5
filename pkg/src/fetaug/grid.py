"""Core 3D grid primitives: volumes, masks, rigid transforms, resampling.

Coordinate conventions shared by every module in this package:

* Voxel data is a 3D array indexed ``data[x, y, z]`` with shape
  ``(nx, ny, nz)``.
* Integer coordinates address voxel centers.  Continuous coordinates
  interpolate between centers; the interpolation domain is ``[0, n - 1]``
  per axis.
* The pivot used for rotations and scalings ("volume center") is
  ``((nx - 1) / 2, (ny - 1) / 2, (nz - 1) / 2)``.
* ``spacing`` is millimeters per voxel along each axis and is metadata
  only: no grid op changes it.

Warps use pull-back (inverse) semantics: the output voxel ``q`` takes the
trilinear value at ``T^-1(q)`` when that point lies in the interpolation
domain and the explicit ``fill`` value otherwise.  Point sampling via
:func:`trilinear_sample` instead edge-clamps, since a single probed point
has no fill notion.

On disk and on the wire voxels are linearized x-fastest
(``index = x + nx * (y + ny * z)``); see :mod:`fetaug.nifti`.

All operations are pure: they never mutate their inputs and identical
inputs produce bit-identical outputs, so everything here is safe to call
from concurrent workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError

__all__ = [
    "Volume",
    "Mask",
    "RigidTransform",
    "trilinear_sample",
    "gaussian_kernel1d",
    "gaussian_blur",
    "affine_pullback",
    "warp_rigid",
    "rescale_grid",
    "rotation_from_euler_deg",
    "rotation_from_quaternion",
]


def _as_spacing(spacing) -> tuple[float, float, float]:
    s = tuple(float(v) for v in spacing)
    if len(s) != 3:
        raise ParameterError(f"spacing must have 3 components, got {len(s)}")
    if not all(np.isfinite(v) and v > 0 for v in s):
        raise ParameterError(f"spacing components must be finite and > 0, got {s}")
    return s


@dataclass(frozen=True)
class Volume:
    """A 3D scalar grid with physical spacing.

    ``data`` is float32, C-contiguous, indexed ``[x, y, z]``.  Treated as
    immutable: ops return new volumes.
    """

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ShapeError(f"volume data must be 3D, got ndim={data.ndim}")
        if data.dtype != np.float32:
            data = data.astype(np.float32)
        data = np.ascontiguousarray(data)
        if not np.all(np.isfinite(data)):
            raise ParameterError("volume intensities must be finite")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", _as_spacing(self.spacing))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    @property
    def center(self) -> np.ndarray:
        return (np.asarray(self.dims, dtype=np.float64) - 1.0) / 2.0

    def with_data(self, data: np.ndarray) -> "Volume":
        return Volume(data, self.spacing)


@dataclass(frozen=True)
class Mask:
    """Binary membership on the same grid layout as :class:`Volume`."""

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ShapeError(f"mask data must be 3D, got ndim={data.ndim}")
        if data.dtype == bool:
            data = data.astype(np.uint8)
        if data.dtype != np.uint8:
            values = np.unique(data)
            if not np.isin(values, (0, 1)).all():
                raise ParameterError("mask values must be 0 or 1")
            data = data.astype(np.uint8)
        elif data.max(initial=0) > 1:
            raise ParameterError("mask values must be 0 or 1")
        object.__setattr__(self, "data", np.ascontiguousarray(data))
        object.__setattr__(self, "spacing", _as_spacing(self.spacing))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    @property
    def bool(self) -> np.ndarray:
        return self.data.view(np.bool_) if self.data.dtype == np.uint8 else self.data.astype(bool)

    def count(self) -> int:
        return int(self.data.sum())

    def same_grid(self, other) -> bool:
        return self.dims == other.dims and self.spacing == other.spacing


def _require_same_grid(a, b, what: str) -> None:
    if a.dims != b.dims:
        raise ShapeError(f"{what}: dims {a.dims} vs {b.dims}")


@dataclass(frozen=True)
class RigidTransform:
    """Rigid motion ``T(p) = R (p - center) + center + translation``.

    ``rotation`` must be orthonormal with determinant +1 (within 1e-6);
    ``translation`` and ``center`` are in voxel units.
    """

    rotation: np.ndarray
    translation: np.ndarray
    center: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        c = np.asarray(self.center, dtype=np.float64).reshape(3)
        if r.shape != (3, 3):
            raise ShapeError(f"rotation must be 3x3, got {r.shape}")
        if not np.isfinite(r).all() or not np.isfinite(t).all() or not np.isfinite(c).all():
            raise ParameterError("transform components must be finite")
        if np.abs(r @ r.T - np.eye(3)).max() > 1e-6:
            raise ParameterError("rotation matrix is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > 1e-6:
            raise ParameterError("rotation matrix must have determinant +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "center", c)

    @classmethod
    def identity(cls, center=(0.0, 0.0, 0.0)) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3), np.asarray(center, dtype=np.float64))

    @classmethod
    def from_euler_deg(cls, angles_deg, center) -> "RigidTransform":
        return cls(rotation_from_euler_deg(angles_deg), np.zeros(3), center)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map points (shape ``(3,)`` or ``(N, 3)``) forward through T."""
        p = np.asarray(points, dtype=np.float64)
        single = p.ndim == 1
        p = np.atleast_2d(p)
        out = (p - self.center) @ self.rotation.T + self.center + self.translation
        return out[0] if single else out

    def inverse(self) -> "RigidTransform":
        # T^-1(q) = R^T (q - c - t) + c, rewritten in the same pivot form.
        rt = self.rotation.T
        return RigidTransform(rt, -(rt @ self.translation), self.center)

    def matrix(self) -> np.ndarray:
        """Homogeneous 4x4 form (row-vector-free convention: m @ [p, 1])."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.center + self.translation - self.rotation @ self.center
        return m


def rotation_from_euler_deg(angles_deg) -> np.ndarray:
    """Rotation matrix from per-axis Euler angles in degrees.

    Applied as ``R = Rz @ Ry @ Rx`` (x first), right-handed about each axis.
    """
    ax, ay, az = (np.deg2rad(float(a)) for a in angles_deg)
    cx, sx = np.cos(ax), np.sin(ax)
    cy, sy = np.cos(ay), np.sin(ay)
    cz, sz = np.cos(az), np.sin(az)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rz @ ry @ rx


def rotation_from_quaternion(q) -> np.ndarray:
    """Rotation matrix from a (w, x, y, z) quaternion (normalized here)."""
    w, x, y, z = np.asarray(q, dtype=np.float64)
    n = np.sqrt(w * w + x * x + y * y + z * z)
    if n == 0:
        raise ParameterError("zero quaternion")
    w, x, y, z = w / n, x / n, y / n, z / n
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def trilinear_sample(vol: Volume, point) -> float:
    """Trilinear interpolation of the 8 neighbors of a continuous point.

    Out-of-bounds points are edge-clamped to the interpolation domain
    ``[0, n - 1]`` per axis.
    """
    p = np.asarray(point, dtype=np.float64).reshape(3)
    if not np.isfinite(p).all():
        raise ParameterError(f"sample point must be finite, got {point}")
    dims = np.asarray(vol.dims)
    p = np.clip(p, 0.0, dims - 1.0)
    i0 = np.floor(p).astype(np.int64)
    i1 = np.minimum(i0 + 1, dims - 1)
    f = p - i0
    d = vol.data
    c = 0.0
    for bx in (0, 1):
        wx = f[0] if bx else 1.0 - f[0]
        ix = i1[0] if bx else i0[0]
        for by in (0, 1):
            wy = f[1] if by else 1.0 - f[1]
            iy = i1[1] if by else i0[1]
            for bz in (0, 1):
                wz = f[2] if bz else 1.0 - f[2]
                iz = i1[2] if bz else i0[2]
                c += wx * wy * wz * float(d[ix, iy, iz])
    return c


def gaussian_kernel1d(sigma_vox: float) -> np.ndarray:
    """Discrete Gaussian truncated at 3 sigma and renormalized to sum 1.

    ``sigma == 0`` yields the identity kernel ``[1.0]``.
    """
    if not np.isfinite(sigma_vox) or sigma_vox < 0:
        raise ParameterError(f"sigma must be finite and >= 0, got {sigma_vox}")
    if sigma_vox == 0:
        return np.ones(1)
    radius = int(np.ceil(3.0 * sigma_vox))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma_vox * sigma_vox))
    return k / k.sum()


def _convolve_separable(data: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    # Circular boundary: with a unit-mass kernel this preserves the global
    # sum (and therefore the mean) exactly.
    from scipy.ndimage import convolve1d

    out = data
    for axis in range(3):
        out = convolve1d(out, kernel, axis=axis, mode="wrap")
    return out


def gaussian_blur(vol: Volume, sigma_vox: float, support_mask: Mask | None = None) -> Volume:
    """Separable Gaussian smoothing, optionally restricted to a mask.

    Without a mask: plain convolution with circular boundary.  With a mask:
    normalized convolution where only in-mask voxels contribute and only
    in-mask voxels are written; everything outside the mask passes through
    bit-unchanged.  An all-ones mask reduces to the unmasked case.
    """
    kernel = gaussian_kernel1d(sigma_vox)
    if support_mask is not None:
        _require_same_grid(vol, support_mask, "gaussian_blur mask")
    if kernel.size == 1:
        return vol
    src = vol.data.astype(np.float64)
    if support_mask is None:
        return vol.with_data(_convolve_separable(src, kernel))
    m = support_mask.data.astype(np.float64)
    num = _convolve_separable(src * m, kernel)
    den = _convolve_separable(m, kernel)
    inside = support_mask.bool
    out = vol.data.copy()
    # Denominator at an in-mask voxel is at least the kernel center weight
    # cubed, so the division is safe.
    out[inside] = (num[inside] / den[inside]).astype(np.float32)
    return vol.with_data(out)


def affine_pullback(img, matrix: np.ndarray, offset: np.ndarray, interpolation: str, fill: float):
    """Resample under ``p = M q + offset``; out-of-domain points get fill.

    Shared engine for :func:`warp_rigid` and :func:`rescale_grid`.  The
    hot loop is JIT-compiled (:mod:`fetaug._kernels`): coordinates and
    weights in float64, values in the image dtype.  Nearest mode rounds
    the in-domain pull-back to the closest voxel.
    """
    from . import _kernels

    is_mask = isinstance(img, Mask)
    if is_mask and interpolation != "nearest":
        raise ParameterError("masks must be resampled with nearest interpolation")
    if interpolation not in ("trilinear", "nearest"):
        raise ParameterError(f"unknown interpolation {interpolation!r}")
    mat = np.ascontiguousarray(matrix, dtype=np.float64)
    off = np.ascontiguousarray(offset, dtype=np.float64)
    if is_mask:
        out = np.empty(img.dims, dtype=np.uint8)
        _kernels.nearest_pullback(img.data, mat, off, np.uint8(0), out)
        return Mask(out, img.spacing)
    out = np.empty(img.dims, dtype=np.float32)
    if interpolation == "nearest":
        _kernels.nearest_pullback(img.data, mat, off, np.float32(fill), out)
    else:
        _kernels.trilinear_pullback(img.data, mat, off, np.float32(fill), out)
    return Volume(out, img.spacing)


def warp_rigid(img, t: RigidTransform, interpolation: str = "trilinear", fill: float = 0.0):
    """Resample a Volume or Mask under a rigid transform.

    Output voxel ``q`` receives the trilinear value at ``T^-1(q)`` when
    that point lies inside the grid and ``fill`` otherwise (masks use
    nearest interpolation and fill with 0, staying binary).
    """
    inv = t.inverse()
    offset = inv.center + inv.translation - inv.rotation @ inv.center
    return affine_pullback(img, inv.rotation, offset, interpolation, fill)


def rescale_grid(img, factor: float, interpolation: str = "trilinear", fill: float = 0.0):
    """Scale content by ``factor`` about the volume center, same grid dims.

    Anatomical scaling, not a grid resample: dims and spacing stay fixed.
    A feature at ``p`` moves to ``center + factor * (p - center)``.  For
    shrinking factors the pull-back reaches outside the grid and those
    lookups contribute ``fill``.
    """
    if not (0.1 <= factor <= 10.0):
        raise ParameterError(f"scale factor must be in [0.1, 10], got {factor}")
    if factor == 1.0:
        if interpolation not in ("trilinear", "nearest"):
            raise ParameterError(f"unknown interpolation {interpolation!r}")
        if isinstance(img, Mask) and interpolation != "nearest":
            raise ParameterError("masks must be resampled with nearest interpolation")
        return img
    center = (np.asarray(img.dims, dtype=np.float64) - 1.0) / 2.0
    matrix = np.eye(3) / factor
    offset = center - center / factor
    return affine_pullback(img, matrix, offset, interpolation, fill)


def scale_about_center(points: np.ndarray, center, factor: float) -> np.ndarray:
    """Co-transform points the way :func:`rescale_grid` moves content."""
    p = np.asarray(points, dtype=np.float64)
    c = np.asarray(center, dtype=np.float64)
    return c + factor * (p - c)
