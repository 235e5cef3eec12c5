"""Ray-driven forward projectors and voxel-driven back projectors.

The two are an unmatched pair: the back projector is close to, but not
exactly, the transpose of the forward projector. Projectors are plain linear
maps without any angular normalization; that lives in :mod:`diffrecon.pipelines`.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .geometry import Geometry2DFan, Geometry2DParallel, Geometry3DCone, source_positions


def sampling_step(geo) -> float:
    """Ray marching step: half the smallest voxel spacing."""
    return 0.5 * min(geo.volume.spacing)


def _check_volume(volume, geo) -> np.ndarray:
    volume = np.ascontiguousarray(volume, dtype=np.float64)
    if volume.shape != geo.volume.shape:
        raise ValueError(f"volume shape {volume.shape} does not match geometry {geo.volume.shape}")
    return volume


def _check_sinogram(sino, geo) -> np.ndarray:
    sino = np.ascontiguousarray(sino, dtype=np.float64)
    if sino.shape != geo.sinogram_shape:
        raise ValueError(f"sinogram shape {sino.shape} does not match geometry {geo.sinogram_shape}")
    return sino


def _rays_2d(geo: Geometry2DParallel) -> tuple[np.ndarray, np.ndarray, bool]:
    rays = geo.ray_vectors
    lateral = np.stack([-rays[:, 1], rays[:, 0]], axis=1)
    u = geo.detector.coordinates()
    if isinstance(geo, Geometry2DFan):
        src = -geo.sid * rays
        det = (geo.sdd - geo.sid) * rays[:, None, :] + u[None, :, None] * lateral[:, None, :]
        dirs = det - src[:, None, :]
        dirs /= np.linalg.norm(dirs, axis=2, keepdims=True)
        starts = np.broadcast_to(src[:, None, :], dirs.shape)
        return np.ascontiguousarray(starts).reshape(-1, 2), dirs.reshape(-1, 2), True
    starts = u[None, :, None] * lateral[:, None, :]
    dirs = np.broadcast_to(rays[:, None, :], starts.shape)
    return starts.reshape(-1, 2), np.ascontiguousarray(dirs).reshape(-1, 2), False


def _forward_2d(volume, geo) -> np.ndarray:
    volume = _check_volume(volume, geo)
    starts, dirs, fan = _rays_2d(geo)
    out = np.empty(len(starts))
    _kernels.ray_cast_2d(
        volume,
        np.array(geo.volume.origin),
        np.array(geo.volume.spacing),
        starts,
        dirs,
        sampling_step(geo),
        fan,
        out,
    )
    return out.reshape(geo.sinogram_shape)


def forward_parallel_2d(volume, geo: Geometry2DParallel) -> np.ndarray:
    """Parallel-beam sinogram ``(n_projections, n_bins)`` of a 2D image."""
    if isinstance(geo, Geometry2DFan):
        raise TypeError("use forward_fan_2d for fan-beam geometries")
    return _forward_2d(volume, geo)


def forward_fan_2d(volume, geo: Geometry2DFan) -> np.ndarray:
    """Fan-beam sinogram; rays run from the source to each detector pixel center."""
    if not isinstance(geo, Geometry2DFan):
        raise TypeError("forward_fan_2d needs a Geometry2DFan")
    return _forward_2d(volume, geo)


def forward_cone_3d(volume, geo: Geometry3DCone) -> np.ndarray:
    """Cone-beam projections ``(n_projections, nv, nu)`` via the projection matrices."""
    volume = _check_volume(volume, geo)
    mats = geo.projection_matrices
    try:
        inv_blocks = np.linalg.inv(mats[:, :, :3])
    except np.linalg.LinAlgError as exc:
        raise ValueError("projection matrix has a singular 3x3 block") from exc
    out = np.empty(geo.sinogram_shape)
    _kernels.ray_cast_cone(
        volume,
        np.array(geo.volume.origin),
        np.array(geo.volume.spacing),
        source_positions(mats),
        np.ascontiguousarray(inv_blocks),
        np.array(geo.detector.shape, dtype=np.int64),
        sampling_step(geo),
        out,
    )
    return out


def _backproject_2d(sino, geo, sid, sdd) -> np.ndarray:
    sino = _check_sinogram(sino, geo)
    out = np.empty(geo.volume.shape)
    _kernels.voxel_backproject_2d(
        sino,
        np.array(geo.volume.origin),
        np.array(geo.volume.spacing),
        np.ascontiguousarray(geo.ray_vectors),
        geo.detector.origin[0],
        geo.detector.spacing[0],
        float(sid),
        float(sdd),
        out,
    )
    return out


def backproject_parallel_2d(sino, geo: Geometry2DParallel) -> np.ndarray:
    """Unweighted sum over views of the linearly interpolated sinogram."""
    if isinstance(geo, Geometry2DFan):
        raise TypeError("use backproject_fan_2d for fan-beam geometries")
    return _backproject_2d(sino, geo, 0.0, 0.0)


def backproject_fan_2d(sino, geo: Geometry2DFan) -> np.ndarray:
    """Fan-beam back projection with the ``1/U**2`` distance weight."""
    if not isinstance(geo, Geometry2DFan):
        raise TypeError("backproject_fan_2d needs a Geometry2DFan")
    return _backproject_2d(sino, geo, geo.sid, geo.sdd)


def backproject_cone_3d(sino, geo: Geometry3DCone) -> np.ndarray:
    """Cone-beam back projection with ``1/w**2`` weights, ``w = 1`` at the iso-center.

    Voxels behind the source contribute nothing.
    """
    sino = _check_sinogram(sino, geo)
    out = np.empty(geo.volume.shape)
    _kernels.voxel_backproject_cone(
        sino,
        np.array(geo.volume.origin),
        np.array(geo.volume.spacing),
        np.ascontiguousarray(geo.projection_matrices),
        float(geo.sid),
        out,
    )
    return out


def forward_project(volume, geo) -> np.ndarray:
    """Dispatch to the forward projector matching ``geo``."""
    if isinstance(geo, Geometry3DCone):
        return forward_cone_3d(volume, geo)
    if isinstance(geo, Geometry2DFan):
        return forward_fan_2d(volume, geo)
    if isinstance(geo, Geometry2DParallel):
        return forward_parallel_2d(volume, geo)
    raise TypeError(f"unsupported geometry {type(geo).__name__}")


def backproject(sino, geo) -> np.ndarray:
    """Dispatch to the back projector matching ``geo``."""
    if isinstance(geo, Geometry3DCone):
        return backproject_cone_3d(sino, geo)
    if isinstance(geo, Geometry2DFan):
        return backproject_fan_2d(sino, geo)
    if isinstance(geo, Geometry2DParallel):
        return backproject_parallel_2d(sino, geo)
    raise TypeError(f"unsupported geometry {type(geo).__name__}")
