"""Minimal bit-exact NIfTI-1 reader/writer.

Deliberately a narrow subset: uncompressed single-file ``.nii``, always
little-endian, magic ``n+1``, ``dim[0] == 3``, ``vox_offset == 352``, and
datatypes uint8 / int16 / float32.  Anything else is rejected with a
distinct error rather than guessed at.  Spacing comes from ``pixdim``
only; qform/sform handling is out of scope and those fields are written
as zeros.

Voxel order on disk is x-fastest (``index = x + nx * (y + ny * z)``),
the NIfTI norm, matching the in-memory ``data[x, y, z]`` layout used
throughout the package.  float32 volumes round-trip bit-identically.

``scl_slope`` / ``scl_inter`` follow the standard decode
``value = slope * raw + inter`` (slope 0 means unscaled).
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import FileFormatError, ParameterError
from .grid import Mask, Volume

__all__ = ["read_volume", "write_volume", "read_mask", "write_mask"]

HEADER_SIZE = 348
VOX_OFFSET = 352

_HEADER_DTYPE = np.dtype(
    [
        ("sizeof_hdr", "<i4"),
        ("data_type", "S10"),
        ("db_name", "S18"),
        ("extents", "<i4"),
        ("session_error", "<i2"),
        ("regular", "S1"),
        ("dim_info", "u1"),
        ("dim", "<i2", (8,)),
        ("intent_p1", "<f4"),
        ("intent_p2", "<f4"),
        ("intent_p3", "<f4"),
        ("intent_code", "<i2"),
        ("datatype", "<i2"),
        ("bitpix", "<i2"),
        ("slice_start", "<i2"),
        ("pixdim", "<f4", (8,)),
        ("vox_offset", "<f4"),
        ("scl_slope", "<f4"),
        ("scl_inter", "<f4"),
        ("slice_end", "<i2"),
        ("slice_code", "u1"),
        ("xyzt_units", "u1"),
        ("cal_max", "<f4"),
        ("cal_min", "<f4"),
        ("slice_duration", "<f4"),
        ("toffset", "<f4"),
        ("glmax", "<i4"),
        ("glmin", "<i4"),
        ("descrip", "S80"),
        ("aux_file", "S24"),
        ("qform_code", "<i2"),
        ("sform_code", "<i2"),
        ("quatern_b", "<f4"),
        ("quatern_c", "<f4"),
        ("quatern_d", "<f4"),
        ("qoffset_x", "<f4"),
        ("qoffset_y", "<f4"),
        ("qoffset_z", "<f4"),
        ("srow_x", "<f4", (4,)),
        ("srow_y", "<f4", (4,)),
        ("srow_z", "<f4", (4,)),
        ("intent_name", "S16"),
        ("magic", "S4"),
    ]
)
assert _HEADER_DTYPE.itemsize == HEADER_SIZE

_DTYPE_CODES = {2: np.dtype("<u1"), 4: np.dtype("<i2"), 16: np.dtype("<f4")}
_CODE_OF_DTYPE = {np.dtype(np.uint8): 2, np.dtype(np.int16): 4, np.dtype(np.float32): 16}
_MM_UNITS = 2  # NIFTI_UNITS_MM


def atomic_write_bytes(path, payload: bytes) -> None:
    """Write via a temp file in the same directory plus rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _build_header(dims, spacing, datatype_code: int) -> np.ndarray:
    hdr = np.zeros((), dtype=_HEADER_DTYPE)
    hdr["sizeof_hdr"] = HEADER_SIZE
    hdr["regular"] = b"r"
    dim = np.ones(8, dtype=np.int16)
    dim[0] = 3
    dim[1:4] = dims
    hdr["dim"] = dim
    hdr["datatype"] = datatype_code
    hdr["bitpix"] = _DTYPE_CODES[datatype_code].itemsize * 8
    pixdim = np.zeros(8, dtype=np.float32)
    pixdim[0] = 1.0
    pixdim[1:4] = spacing
    hdr["pixdim"] = pixdim
    hdr["vox_offset"] = VOX_OFFSET
    hdr["scl_slope"] = 1.0
    hdr["scl_inter"] = 0.0
    hdr["xyzt_units"] = _MM_UNITS
    hdr["descrip"] = b"fetaug"
    hdr["magic"] = b"n+1\x00"
    return hdr


def _write_array(arr: np.ndarray, spacing, path) -> None:
    code = _CODE_OF_DTYPE[arr.dtype]
    hdr = _build_header(arr.shape, spacing, code)
    payload = hdr.tobytes() + b"\x00" * (VOX_OFFSET - HEADER_SIZE) + arr.ravel(order="F").tobytes()
    atomic_write_bytes(path, payload)


def write_volume(vol: Volume, path) -> None:
    _write_array(np.asarray(vol.data, dtype="<f4"), vol.spacing, path)


def write_mask(mask: Mask, path) -> None:
    _write_array(np.asarray(mask.data, dtype="<u1"), mask.spacing, path)


def _read_array(path) -> tuple[np.ndarray, tuple[float, float, float]]:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < HEADER_SIZE:
        raise FileFormatError(f"{path}: truncated header ({len(raw)} bytes)")
    hdr = np.frombuffer(raw[:HEADER_SIZE], dtype=_HEADER_DTYPE)[0]
    magic = bytes(hdr["magic"])
    if magic.startswith(b"ni1"):
        raise FileFormatError(f"{path}: detached header/image pairs (magic 'ni1') not supported")
    if not magic.startswith(b"n+1"):
        raise FileFormatError(f"{path}: bad magic {magic!r}")
    if int(hdr["sizeof_hdr"]) != HEADER_SIZE:
        raise FileFormatError(
            f"{path}: sizeof_hdr {int(hdr['sizeof_hdr'])} (big-endian or corrupt file)"
        )
    if int(hdr["dim"][0]) != 3:
        raise FileFormatError(f"{path}: only 3D files supported, dim[0]={int(hdr['dim'][0])}")
    code = int(hdr["datatype"])
    if code not in _DTYPE_CODES:
        raise FileFormatError(f"{path}: unsupported datatype code {code}")
    if int(hdr["vox_offset"]) != VOX_OFFSET:
        raise FileFormatError(f"{path}: unsupported vox_offset {float(hdr['vox_offset'])}")
    dims = tuple(int(d) for d in hdr["dim"][1:4])
    if any(d < 1 for d in dims):
        raise FileFormatError(f"{path}: non-positive dims {dims}")
    spacing = tuple(float(p) for p in hdr["pixdim"][1:4])
    if any(not np.isfinite(s) or s <= 0 for s in spacing):
        raise FileFormatError(f"{path}: non-positive pixdim {spacing}")
    dtype = _DTYPE_CODES[code]
    count = dims[0] * dims[1] * dims[2]
    body = raw[VOX_OFFSET : VOX_OFFSET + count * dtype.itemsize]
    if len(body) != count * dtype.itemsize:
        raise FileFormatError(f"{path}: truncated data section")
    arr = np.frombuffer(body, dtype=dtype).reshape(dims, order="F")
    slope = float(hdr["scl_slope"])
    inter = float(hdr["scl_inter"])
    if slope == 0.0:
        slope, inter = 1.0, 0.0
    if (slope, inter) != (1.0, 0.0):
        arr = (arr.astype(np.float32) * np.float32(slope)) + np.float32(inter)
    return np.ascontiguousarray(arr), spacing


def read_volume(path) -> Volume:
    arr, spacing = _read_array(path)
    return Volume(arr.astype(np.float32, copy=False), spacing)


def read_mask(path) -> Mask:
    arr, spacing = _read_array(path)
    if arr.dtype != np.uint8:
        raise FileFormatError(f"{path}: masks must be uint8, got {arr.dtype}")
    if arr.max(initial=0) > 1:
        raise ParameterError(f"{path}: mask values must be 0 or 1")
    return Mask(arr, spacing)
