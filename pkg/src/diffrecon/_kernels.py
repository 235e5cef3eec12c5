"""Numba kernels behind the projectors.

Every kernel owns one output element per loop iteration (a detector pixel for
ray casting, a voxel for back projection), so results do not depend on the
number of threads.
"""

import math

import numba
import numpy as np
from numba import njit, prange

# the system TBB is too old for numba; prefer OpenMP without the warning
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

_INF = np.inf


@njit(cache=True, inline="always")
def _slab(p, d, lo, hi, t0, t1):
    if abs(d) < 1e-15:
        if p < lo or p > hi:
            return 1.0, 0.0
        return t0, t1
    a = (lo - p) / d
    b = (hi - p) / d
    if a > b:
        a, b = b, a
    return max(t0, a), min(t1, b)


@njit(cache=True, inline="always")
def _bilinear(img, fy, fx):
    ny, nx = img.shape
    iy = math.floor(fy)
    ix = math.floor(fx)
    wy = fy - iy
    wx = fx - ix
    acc = 0.0
    for ddy in range(2):
        y = iy + ddy
        if y < 0 or y >= ny:
            continue
        wyy = wy if ddy else 1.0 - wy
        for ddx in range(2):
            x = ix + ddx
            if x < 0 or x >= nx:
                continue
            acc += wyy * (wx if ddx else 1.0 - wx) * img[y, x]
    return acc


@njit(cache=True, inline="always")
def _trilinear(vol, fz, fy, fx):
    nz, ny, nx = vol.shape
    iz = math.floor(fz)
    iy = math.floor(fy)
    ix = math.floor(fx)
    wz = fz - iz
    wy = fy - iy
    wx = fx - ix
    acc = 0.0
    for ddz in range(2):
        z = iz + ddz
        if z < 0 or z >= nz:
            continue
        wzz = wz if ddz else 1.0 - wz
        for ddy in range(2):
            y = iy + ddy
            if y < 0 or y >= ny:
                continue
            wyy = wzz * (wy if ddy else 1.0 - wy)
            for ddx in range(2):
                x = ix + ddx
                if x < 0 or x >= nx:
                    continue
                acc += wyy * (wx if ddx else 1.0 - wx) * vol[z, y, x]
    return acc


@njit(cache=True, inline="always")
def _linear(row, f):
    n = row.shape[0]
    i = math.floor(f)
    w = f - i
    acc = 0.0
    if 0 <= i < n:
        acc += (1.0 - w) * row[i]
    if 0 <= i + 1 < n:
        acc += w * row[i + 1]
    return acc


@njit(parallel=True, cache=True)
def ray_cast_2d(img, origin, spacing, starts, dirs, step, forward_only, out):
    """Line integrals of ``img`` along rays ``start + t * dir`` (``dir`` unit length)."""
    ny, nx = img.shape
    oy, ox = origin[0], origin[1]
    sy, sx = spacing[0], spacing[1]
    # support of the bilinear interpolant is one voxel beyond the outer centers
    ylo, yhi = oy - sy, oy + ny * sy
    xlo, xhi = ox - sx, ox + nx * sx
    for k in prange(starts.shape[0]):
        px, py = starts[k, 0], starts[k, 1]
        dx, dy = dirs[k, 0], dirs[k, 1]
        t0 = 0.0 if forward_only else -_INF
        t1 = _INF
        t0, t1 = _slab(px, dx, xlo, xhi, t0, t1)
        t0, t1 = _slab(py, dy, ylo, yhi, t0, t1)
        acc = 0.0
        if t1 > t0:
            n = int(math.ceil((t1 - t0) / step))
            for m in range(n):
                t = t0 + (m + 0.5) * step
                acc += _bilinear(img, (py + t * dy - oy) / sy, (px + t * dx - ox) / sx)
        out[k] = acc * step


@njit(parallel=True, cache=True)
def ray_cast_cone(vol, origin, spacing, sources, inv_blocks, det_shape, step, out):
    """Cone-beam line integrals; ray direction for pixel (u, v) is ``M^-1 (u, v, 1)``."""
    nz, ny, nx = vol.shape
    oz, oy, ox = origin[0], origin[1], origin[2]
    sz, sy, sx = spacing[0], spacing[1], spacing[2]
    zlo, zhi = oz - sz, oz + nz * sz
    ylo, yhi = oy - sy, oy + ny * sy
    xlo, xhi = ox - sx, ox + nx * sx
    n_views = sources.shape[0]
    nv, nu = det_shape[0], det_shape[1]
    for k in prange(n_views * nv):
        i = k // nv
        v = k % nv
        sxw, syw, szw = sources[i, 0], sources[i, 1], sources[i, 2]
        minv = inv_blocks[i]
        for u in range(nu):
            dx = minv[0, 0] * u + minv[0, 1] * v + minv[0, 2]
            dy = minv[1, 0] * u + minv[1, 1] * v + minv[1, 2]
            dz = minv[2, 0] * u + minv[2, 1] * v + minv[2, 2]
            norm = math.sqrt(dx * dx + dy * dy + dz * dz)
            dx /= norm
            dy /= norm
            dz /= norm
            t0, t1 = 0.0, _INF
            t0, t1 = _slab(sxw, dx, xlo, xhi, t0, t1)
            t0, t1 = _slab(syw, dy, ylo, yhi, t0, t1)
            t0, t1 = _slab(szw, dz, zlo, zhi, t0, t1)
            acc = 0.0
            if t1 > t0:
                n = int(math.ceil((t1 - t0) / step))
                for m in range(n):
                    t = t0 + (m + 0.5) * step
                    acc += _trilinear(
                        vol,
                        (szw + t * dz - oz) / sz,
                        (syw + t * dy - oy) / sy,
                        (sxw + t * dx - ox) / sx,
                    )
            out[i, v, u] = acc * step


@njit(parallel=True, cache=True)
def voxel_backproject_2d(sino, origin, spacing, rays, det_origin, det_spacing, sid, sdd, out):
    """Voxel-driven 2D back projection.

    ``sid == 0`` selects parallel beam; otherwise fan beam with ``(sid/depth)**2``
    distance weighting.
    """
    ny, nx = out.shape
    n_views = sino.shape[0]
    for iy in prange(ny):
        y = origin[0] + iy * spacing[0]
        for ix in range(nx):
            x = origin[1] + ix * spacing[1]
            acc = 0.0
            for i in range(n_views):
                rx, ry = rays[i, 0], rays[i, 1]
                lateral = -x * ry + y * rx
                if sid == 0.0:
                    acc += _linear(sino[i], (lateral - det_origin) / det_spacing)
                else:
                    depth = sid + x * rx + y * ry
                    if depth <= 0.0:
                        continue
                    u = sdd * lateral / depth
                    mag = sid / depth
                    acc += mag * mag * _linear(sino[i], (u - det_origin) / det_spacing)
            out[iy, ix] = acc


@njit(parallel=True, cache=True)
def voxel_backproject_cone(sino, origin, spacing, mats, sid, out):
    """Voxel-driven cone back projection through projection matrices, 1/w^2 weighted."""
    nz, ny, nx = out.shape
    n_views = sino.shape[0]
    for k in prange(nz * ny):
        iz = k // ny
        iy = k % ny
        z = origin[0] + iz * spacing[0]
        y = origin[1] + iy * spacing[1]
        for ix in range(nx):
            x = origin[2] + ix * spacing[2]
            acc = 0.0
            for i in range(n_views):
                m = mats[i]
                h0 = m[0, 0] * x + m[0, 1] * y + m[0, 2] * z + m[0, 3]
                h1 = m[1, 0] * x + m[1, 1] * y + m[1, 2] * z + m[1, 3]
                h2 = m[2, 0] * x + m[2, 1] * y + m[2, 2] * z + m[2, 3]
                if h2 <= 0.0:
                    continue
                w = sid / h2
                acc += w * w * _bilinear(sino[i], h1 / h2, h0 / h2)
            out[iz, iy, ix] = acc
