"""Synthetic uterus/fetus phantoms with exact masks and keypoints.

Crude geometric primitives (ellipsoids, spheres, capsules) stand in for
anatomy: every downstream stage only needs consistent geometry, masks,
keypoint coordinates, and EPI-like contrast (fluid brightest, body mid,
background dark).

The canonical skeleton lives in a body frame centered on the trunk, in
units of ``k = scale * min(dims) / 96``, so phantoms scale with both the
grid and the gestational-age proxy ``scale``.  At zero joint angles the
skeleton is exactly mirror-symmetric across the x = 0 midplane.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .augment import LabeledSample
from .errors import ParameterError, PlacementInfeasibleError
from .grid import Mask, Volume, gaussian_blur, rotation_from_quaternion
from .heatmap import GROUP_OF, KEYPOINT_NAMES, MERGED_OF, KeypointSet

__all__ = ["PhantomSpec", "PhantomSample", "make_phantom", "canonical_keypoints", "oracle_predict"]


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple[int, int, int] = (96, 96, 96)
    spacing: tuple[float, float, float] = (3.0, 3.0, 3.0)
    scale_range: tuple[float, float] = (0.6, 1.0)
    joint_angle_max_deg: float = 25.0
    fluid_intensity: float = 200.0
    body_intensity: float = 100.0
    background_intensity: float = 30.0
    noise_floor: float = 2.0
    heatmap_sigma: float = 2.0

    def __post_init__(self):
        lo, hi = self.scale_range
        if not (0.4 <= lo <= hi <= 1.0):
            raise ParameterError(f"scale range must lie in [0.4, 1.0], got {self.scale_range}")
        if not (self.fluid_intensity > self.body_intensity > self.background_intensity):
            raise ParameterError("intensities must satisfy fluid > body > background")
        if min(self.dims) < 48:
            raise ParameterError("phantom grid must be at least 48 voxels per axis")
        if not (0.0 <= self.joint_angle_max_deg <= 60.0):
            raise ParameterError("joint angle max must be in [0, 60] degrees")


@dataclass(frozen=True)
class PhantomSample:
    """A labeled sample plus the exact generation parameters."""

    sample: LabeledSample
    params: dict


# Canonical skeleton in body-frame units of k (x: left+, y: anterior-,
# z: head+).  Left-side quantities only; the right side is the exact
# x-mirror.
_TRUNK_SEMI = np.array([9.0, 8.0, 13.0])
_HEAD_CENTER = np.array([0.0, 0.0, 19.0])
_HEAD_RADIUS = 7.0
_EYE_L = np.array([2.0, -3.5, 19.5])
_SHOULDER_L = np.array([8.0, 0.0, 10.0])
_HIP_L = np.array([5.0, 0.0, -10.0])
_BLADDER = np.array([0.0, -2.0, -8.0])
_ARM_DIR = np.array([0.50, -0.30, -0.81])
_FOREARM_DIR = np.array([0.35, -0.55, -0.76])
_THIGH_DIR = np.array([0.25, -0.25, -0.93])
_SHANK_DIR = np.array([0.10, -0.60, -0.79])
_UPPER_ARM_LEN = 9.0
_FOREARM_LEN = 8.0
_THIGH_LEN = 10.0
_SHANK_LEN = 9.0
_LIMB_RADIUS = 2.2
_UTERUS_FRACTION = 0.42

_MIRROR = np.array([-1.0, 1.0, 1.0])


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def _axis_rotation(axis: np.ndarray, angle_rad: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis."""
    a = _unit(np.asarray(axis, dtype=np.float64))
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    cross = np.array(
        [[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]]
    )
    return c * np.eye(3) + s * cross + (1 - c) * np.outer(a, a)


def _root_rotation(theta_x: float, theta_y: float) -> np.ndarray:
    cx, sx = np.cos(theta_x), np.sin(theta_x)
    cy, sy = np.cos(theta_y), np.sin(theta_y)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    return ry @ rx


def _limb_chain(root, d1, d2, len1, len2, angles_rad):
    """Joint positions of a two-segment limb posed by (theta_x, theta_y, flex)."""
    theta_x, theta_y, flex = angles_rad
    r_root = _root_rotation(theta_x, theta_y)
    d1w = r_root @ _unit(d1)
    flex_axis = _unit(np.cross(d1, d2))
    d2w = r_root @ (_axis_rotation(flex_axis, flex) @ _unit(d2))
    mid = np.asarray(root, dtype=np.float64) + len1 * d1w
    tip = mid + len2 * d2w
    return mid, tip


def _skeleton(joint_angles_rad: np.ndarray) -> dict[str, np.ndarray]:
    """Body-frame keypoints (in units of k) for 12 joint angles.

    Angle order: (arm_L, arm_R, leg_L, leg_R) x (theta_x, theta_y, flex).
    """
    a = np.asarray(joint_angles_rad, dtype=np.float64).reshape(4, 3)
    pts: dict[str, np.ndarray] = {
        "bladder": _BLADDER.copy(),
        "eye_L": _EYE_L.copy(),
        "eye_R": _EYE_L * _MIRROR,
        "shoulder_L": _SHOULDER_L.copy(),
        "shoulder_R": _SHOULDER_L * _MIRROR,
        "hip_L": _HIP_L.copy(),
        "hip_R": _HIP_L * _MIRROR,
    }
    elbow_l, wrist_l = _limb_chain(pts["shoulder_L"], _ARM_DIR, _FOREARM_DIR,
                                   _UPPER_ARM_LEN, _FOREARM_LEN, a[0])
    elbow_r, wrist_r = _limb_chain(pts["shoulder_R"], _ARM_DIR * _MIRROR, _FOREARM_DIR * _MIRROR,
                                   _UPPER_ARM_LEN, _FOREARM_LEN, a[1])
    knee_l, ankle_l = _limb_chain(pts["hip_L"], _THIGH_DIR, _SHANK_DIR,
                                  _THIGH_LEN, _SHANK_LEN, a[2])
    knee_r, ankle_r = _limb_chain(pts["hip_R"], _THIGH_DIR * _MIRROR, _SHANK_DIR * _MIRROR,
                                  _THIGH_LEN, _SHANK_LEN, a[3])
    pts.update(
        elbow_L=elbow_l, wrist_L=wrist_l, elbow_R=elbow_r, wrist_R=wrist_r,
        knee_L=knee_l, ankle_L=ankle_l, knee_R=knee_r, ankle_R=ankle_r,
    )
    return pts


def canonical_keypoints(scale: float, dims) -> np.ndarray:
    """Closed-form keypoints at zero joint angles and identity placement.

    Identity placement puts the body frame origin at the volume center
    with no rotation, so this is ``center + k * skeleton``.
    """
    k = scale * min(dims) / 96.0
    center = (np.asarray(dims, dtype=np.float64) - 1.0) / 2.0
    pts = _skeleton(np.zeros(12))
    return np.array([center + k * pts[name] for name in KEYPOINT_NAMES])


def _segment_distance_sq(coords, p0, p1):
    """Per-voxel squared distance to the segment p0-p1 (vectorized)."""
    d = p1 - p0
    dd = float(d @ d)
    px = coords[0] - p0[0]
    py = coords[1] - p0[1]
    pz = coords[2] - p0[2]
    if dd == 0.0:
        return px * px + py * py + pz * pz
    t = np.clip((px * d[0] + py * d[1] + pz * d[2]) / dd, 0.0, 1.0)
    qx = px - t * d[0]
    qy = py - t * d[1]
    qz = pz - t * d[2]
    return qx * qx + qy * qy + qz * qz


def _voxelize_body(dims, rotation, position, k, pts) -> np.ndarray:
    nx, ny, nz = dims
    gx = np.arange(nx, dtype=np.float64)[:, None, None]
    gy = np.arange(ny, dtype=np.float64)[None, :, None]
    gz = np.arange(nz, dtype=np.float64)[None, None, :]
    coords = (
        np.broadcast_to(gx, dims).copy(),
        np.broadcast_to(gy, dims).copy(),
        np.broadcast_to(gz, dims).copy(),
    )
    # Body-local coordinates: p = R^T (q - position), in units of k.
    rel = [coords[i] - position[i] for i in range(3)]
    local = [
        (rotation[0, i] * rel[0] + rotation[1, i] * rel[1] + rotation[2, i] * rel[2]) / k
        for i in range(3)
    ]
    trunk = (
        (local[0] / _TRUNK_SEMI[0]) ** 2
        + (local[1] / _TRUNK_SEMI[1]) ** 2
        + (local[2] / _TRUNK_SEMI[2]) ** 2
    ) <= 1.0
    head_rel = [local[i] - _HEAD_CENTER[i] for i in range(3)]
    body = trunk | (
        head_rel[0] ** 2 + head_rel[1] ** 2 + head_rel[2] ** 2 <= _HEAD_RADIUS**2
    )
    # Thin limbs still need a connected voxelization at small scales.
    radius = max(_LIMB_RADIUS, 1.2 / k)
    segments = [
        (pts["shoulder_L"], pts["elbow_L"]), (pts["elbow_L"], pts["wrist_L"]),
        (pts["shoulder_R"], pts["elbow_R"]), (pts["elbow_R"], pts["wrist_R"]),
        (pts["hip_L"], pts["knee_L"]), (pts["knee_L"], pts["ankle_L"]),
        (pts["hip_R"], pts["knee_R"]), (pts["knee_R"], pts["ankle_R"]),
    ]
    r2 = radius * radius
    for p0, p1 in segments:
        body |= _segment_distance_sq(local, p0, p1) <= r2
    return body


def _uterus_mask(dims) -> np.ndarray:
    nx, ny, nz = dims
    center = (np.asarray(dims, dtype=np.float64) - 1.0) / 2.0
    semi = _UTERUS_FRACTION * np.asarray(dims, dtype=np.float64)
    gx = ((np.arange(nx) - center[0]) / semi[0]) ** 2
    gy = ((np.arange(ny) - center[1]) / semi[1]) ** 2
    gz = ((np.arange(nz) - center[2]) / semi[2]) ** 2
    return (gx[:, None, None] + gy[None, :, None] + gz[None, None, :]) <= 1.0


def _body_reach(pts) -> float:
    """Radius (units of k) of a ball around the body origin covering it."""
    extremes = [np.linalg.norm(p) for p in pts.values()]
    extremes.append(np.linalg.norm(_HEAD_CENTER) + _HEAD_RADIUS)
    extremes.append(float(np.max(_TRUNK_SEMI)))
    return float(max(extremes)) + _LIMB_RADIUS + 1.0


def make_phantom(
    spec: PhantomSpec,
    rng: np.random.Generator,
    scale: float | None = None,
    joint_angles_deg=None,
    placement=None,
    max_tries: int = 50,
) -> PhantomSample:
    """Generate one phantom.

    ``scale``, ``joint_angles_deg`` (12 values) and ``placement``
    (rotation matrix, position) override the random draws, which keeps
    the generator exactly testable.  Draw order: scale, joint angles,
    then per placement try a quaternion and an offset.
    """
    dims = spec.dims
    if scale is None:
        scale = float(rng.uniform(*spec.scale_range))
    if joint_angles_deg is None:
        m = spec.joint_angle_max_deg
        joint_angles_deg = rng.uniform(-m, m, size=12)
    angles_rad = np.deg2rad(np.asarray(joint_angles_deg, dtype=np.float64))
    k = scale * min(dims) / 96.0
    pts = _skeleton(angles_rad)
    uterus = _uterus_mask(dims)
    center = (np.asarray(dims, dtype=np.float64) - 1.0) / 2.0
    semi = _UTERUS_FRACTION * np.asarray(dims, dtype=np.float64)
    reach_vox = _body_reach(pts) * k

    for attempt in range(max_tries):
        if placement is not None:
            rotation, position = placement
            rotation = np.asarray(rotation, dtype=np.float64)
            position = np.asarray(position, dtype=np.float64)
        else:
            rotation = rotation_from_quaternion(rng.normal(size=4))
            slack = np.maximum(semi - reach_vox, 0.0)
            position = center + rng.uniform(-1.0, 1.0, size=3) * slack
        world = {name: position + rotation @ (k * pts[name]) for name in KEYPOINT_NAMES}
        body = _voxelize_body(dims, rotation, position, k, pts)
        if not body.any():
            raise PlacementInfeasibleError("phantom body voxelized to nothing")
        if not uterus[body].all():
            if placement is not None:
                raise PlacementInfeasibleError("explicit placement leaves the uterus")
            continue
        kp_idx = np.rint(np.array([world[n] for n in KEYPOINT_NAMES])).astype(np.int64)
        kp_ok = (
            (kp_idx >= 0).all()
            and (kp_idx < np.asarray(dims)).all()
            and body[kp_idx[:, 0], kp_idx[:, 1], kp_idx[:, 2]].all()
        )
        if not kp_ok:
            if placement is not None:
                raise PlacementInfeasibleError("explicit placement drops keypoints off the body")
            continue
        break
    else:
        raise PlacementInfeasibleError(f"no valid phantom placement in {max_tries} tries")

    fluid = uterus & ~body
    img = np.full(dims, spec.background_intensity, dtype=np.float64)
    img[fluid] = spec.fluid_intensity
    img[body] = spec.body_intensity
    vol = gaussian_blur(Volume(img, spec.spacing), 0.5)
    if spec.noise_floor > 0:
        vol = vol.with_data(vol.data + rng.normal(0.0, spec.noise_floor, size=dims))
    kps = KeypointSet(np.array([world[n] for n in KEYPOINT_NAMES]), np.ones(15, dtype=bool))
    sample = LabeledSample(
        volume=vol,
        keypoints=kps,
        heatmap_sigma=spec.heatmap_sigma,
        provenance="raw",
        body_mask=Mask(body, spec.spacing),
        fluid_mask=Mask(fluid, spec.spacing),
        uterus_mask=Mask(uterus, spec.spacing),
    )
    params = {
        "scale": float(scale),
        "joint_angles_deg": [float(a) for a in np.asarray(joint_angles_deg).ravel()],
        "rotation": rotation.tolist(),
        "position": position.tolist(),
    }
    return PhantomSample(sample=sample, params=params)


def oracle_predict(kps: KeypointSet, spacing, noise_mm, rng: np.random.Generator) -> KeypointSet:
    """Synthetic predictions: isotropic Gaussian jitter in millimeters.

    ``noise_mm`` is either a scalar or a mapping from difficulty group
    (1..3) to sigma.  Draws happen for all 15 keypoints in name order so
    the stream does not depend on visibility.
    """
    if np.isscalar(noise_mm):
        by_group = {1: float(noise_mm), 2: float(noise_mm), 3: float(noise_mm)}
    else:
        by_group = {int(g): float(v) for g, v in dict(noise_mm).items()}
    sp = np.asarray(spacing, dtype=np.float64)
    positions = kps.positions.copy()
    for i, name in enumerate(KEYPOINT_NAMES):
        sigma = by_group[GROUP_OF[MERGED_OF[name]]]
        if sigma < 0:
            raise ParameterError(f"noise sigma must be >= 0, got {sigma}")
        disp_mm = rng.normal(0.0, sigma, size=3) if sigma > 0 else np.zeros(3)
        if kps.visible[i]:
            positions[i] = positions[i] + disp_mm / sp
    return KeypointSet(positions, kps.visible.copy())
