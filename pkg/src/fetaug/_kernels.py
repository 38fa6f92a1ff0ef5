"""JIT-compiled hot loops for resampling.

The pull-back kernels implement the documented warp semantics directly:
``p = M q + offset`` per output voxel, trilinear (or rounded-nearest)
lookup when ``p`` lies in ``[0, n-1]`` per axis, ``fill`` otherwise.
Coordinate and weight arithmetic runs in float64; volume values are
float32 in/out, masks uint8.  No fastmath: results must be deterministic
and reproducible bit-for-bit.
"""

import numba
import numpy as np


@numba.njit(cache=True)
def trilinear_pullback(src, mat, offset, fill, out):
    nx, ny, nz = src.shape
    hx, hy, hz = nx - 1.0, ny - 1.0, nz - 1.0
    for x in range(out.shape[0]):
        ax = mat[0, 0] * x + offset[0]
        ay = mat[1, 0] * x + offset[1]
        az = mat[2, 0] * x + offset[2]
        for y in range(out.shape[1]):
            bx = ax + mat[0, 1] * y
            by = ay + mat[1, 1] * y
            bz = az + mat[2, 1] * y
            for z in range(out.shape[2]):
                px = bx + mat[0, 2] * z
                py = by + mat[1, 2] * z
                pz = bz + mat[2, 2] * z
                if 0.0 <= px <= hx and 0.0 <= py <= hy and 0.0 <= pz <= hz:
                    i0 = int(px)
                    j0 = int(py)
                    k0 = int(pz)
                    i1 = i0 + 1 if i0 + 1 < nx else nx - 1
                    j1 = j0 + 1 if j0 + 1 < ny else ny - 1
                    k1 = k0 + 1 if k0 + 1 < nz else nz - 1
                    fx = px - i0
                    fy = py - j0
                    fz = pz - k0
                    gx = 1.0 - fx
                    gy = 1.0 - fy
                    gz = 1.0 - fz
                    out[x, y, z] = (
                        gx * (gy * (gz * src[i0, j0, k0] + fz * src[i0, j0, k1])
                              + fy * (gz * src[i0, j1, k0] + fz * src[i0, j1, k1]))
                        + fx * (gy * (gz * src[i1, j0, k0] + fz * src[i1, j0, k1])
                                + fy * (gz * src[i1, j1, k0] + fz * src[i1, j1, k1]))
                    )
                else:
                    out[x, y, z] = fill


@numba.njit(cache=True)
def nearest_pullback(src, mat, offset, fill, out):
    nx, ny, nz = src.shape
    hx, hy, hz = nx - 1.0, ny - 1.0, nz - 1.0
    for x in range(out.shape[0]):
        ax = mat[0, 0] * x + offset[0]
        ay = mat[1, 0] * x + offset[1]
        az = mat[2, 0] * x + offset[2]
        for y in range(out.shape[1]):
            bx = ax + mat[0, 1] * y
            by = ay + mat[1, 1] * y
            bz = az + mat[2, 1] * y
            for z in range(out.shape[2]):
                px = bx + mat[0, 2] * z
                py = by + mat[1, 2] * z
                pz = bz + mat[2, 2] * z
                if 0.0 <= px <= hx and 0.0 <= py <= hy and 0.0 <= pz <= hz:
                    out[x, y, z] = src[int(px + 0.5), int(py + 0.5), int(pz + 0.5)]
                else:
                    out[x, y, z] = fill


@numba.njit(cache=True)
def bias_multiply(src, x_hat, planes, out):
    """out = src * exp(sum_i x_hat^i * planes[i]) voxel-wise.

    ``planes[i]`` is the (y, z) polynomial collecting every monomial with
    x power i; Horner evaluation over the x powers.
    """
    nx, ny, nz = src.shape
    order = planes.shape[0] - 1
    for x in range(nx):
        h = x_hat[x]
        for y in range(ny):
            for z in range(nz):
                acc = planes[order, y, z]
                for i in range(order - 1, -1, -1):
                    acc = acc * h + planes[i, y, z]
                out[x, y, z] = src[x, y, z] * np.exp(acc)


@numba.njit(cache=True)
def axis_box_downsample(src2d, width, out2d):
    """Area-average rows of ``src2d`` into ``out2d`` slabs of ``width``.

    Rows are independent signals; slab p averages over
    ``[p * width, (p + 1) * width)`` treating samples as unit cells.
    """
    rows, n = src2d.shape
    m = out2d.shape[1]
    for r in range(rows):
        for p in range(m):
            lo = p * width
            hi = lo + width
            i0 = int(lo)
            i1 = int(hi)
            if i1 > n - 1:
                i1 = n - 1
            total = 0.0
            # Partial first cell.
            frac0 = lo - i0
            if frac0 > 0.0:
                total += (1.0 - frac0) * src2d[r, i0]
                start = i0 + 1
            else:
                start = i0
            for i in range(start, min(i1, n)):
                total += src2d[r, i]
            frac1 = hi - i1
            if frac1 > 0.0 and i1 < n:
                total += frac1 * src2d[r, i1]
            out2d[r, p] = total / width


@numba.njit(cache=True)
def axis_lerp(src2d, pos, out2d):
    """Linear interpolation of each row at clamped ``pos``."""
    rows, m = src2d.shape
    n = pos.shape[0]
    for r in range(rows):
        for j in range(n):
            p = pos[j]
            if p <= 0.0:
                out2d[r, j] = src2d[r, 0]
            elif p >= m - 1.0:
                out2d[r, j] = src2d[r, m - 1]
            else:
                i0 = int(p)
                f = p - i0
                out2d[r, j] = (1.0 - f) * src2d[r, i0] + f * src2d[r, i0 + 1]
