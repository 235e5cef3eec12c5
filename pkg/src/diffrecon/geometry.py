"""Scan geometries and circular trajectories.

All shapes, spacings and origins are given in array axis order: ``(ny, nx)``
for 2D images, ``(nz, ny, nx)`` for volumes, and ``(nv, nu)`` for flat cone
detectors. World coordinates are right-handed with the iso-center at the
origin; the gantry rotates about the z axis.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def _as_tuple(values, dtype=float) -> tuple:
    if np.isscalar(values):
        values = (values,)
    return tuple(dtype(v) for v in values)


@dataclass(frozen=True)
class VolumeSpec:
    """Voxel grid description. ``origin`` is the center of voxel 0."""

    shape: tuple[int, ...]
    spacing: tuple[float, ...]
    origin: tuple[float, ...] | None = None

    def __post_init__(self):
        shape = _as_tuple(self.shape, int)
        spacing = _as_tuple(self.spacing)
        if len(spacing) == 1 and len(shape) > 1:
            spacing = spacing * len(shape)
        if len(shape) not in (2, 3) or len(spacing) != len(shape):
            raise ValueError(f"volume needs 2 or 3 axes, got shape={shape} spacing={spacing}")
        if min(shape) < 1:
            raise ValueError(f"volume shape entries must be >= 1, got {shape}")
        if min(spacing) <= 0:
            raise ValueError(f"volume spacing must be positive, got {spacing}")
        if self.origin is None:
            origin = tuple(-(n - 1) * s / 2.0 for n, s in zip(shape, spacing))
        else:
            origin = _as_tuple(self.origin)
            if len(origin) != len(shape):
                raise ValueError("origin must have one entry per axis")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def ndim(self) -> int:
        return len(self.shape)

    def coordinates(self, axis: int) -> np.ndarray:
        """World coordinates (mm) of the voxel centers along ``axis``."""
        return self.origin[axis] + np.arange(self.shape[axis]) * self.spacing[axis]


@dataclass(frozen=True)
class DetectorSpec:
    """Flat detector. ``origin`` is the coordinate of pixel 0 relative to the principal ray."""

    shape: tuple[int, ...]
    spacing: tuple[float, ...]
    origin: tuple[float, ...] | None = None

    def __post_init__(self):
        shape = _as_tuple(self.shape, int)
        spacing = _as_tuple(self.spacing)
        if len(spacing) == 1 and len(shape) > 1:
            spacing = spacing * len(shape)
        if len(shape) not in (1, 2) or len(spacing) != len(shape):
            raise ValueError(f"detector needs 1 or 2 axes, got shape={shape} spacing={spacing}")
        if min(shape) < 1:
            raise ValueError(f"detector shape entries must be >= 1, got {shape}")
        if min(spacing) <= 0:
            raise ValueError(f"detector spacing must be positive, got {spacing}")
        if self.origin is None:
            origin = tuple(-(n - 1) * s / 2.0 for n, s in zip(shape, spacing))
        else:
            origin = _as_tuple(self.origin)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    def coordinates(self, axis: int = -1) -> np.ndarray:
        axis = axis % len(self.shape)
        return self.origin[axis] + np.arange(self.shape[axis]) * self.spacing[axis]


def projection_angles(n_projections: int, angular_range: float) -> np.ndarray:
    """Equally spaced view angles ``i * range / n``, endpoint excluded."""
    if n_projections < 1:
        raise ValueError(f"n_projections must be >= 1, got {n_projections}")
    if angular_range <= 0:
        raise ValueError(f"angular_range must be positive, got {angular_range}")
    return np.arange(n_projections) * (angular_range / n_projections)


def circular_trajectory_2d(n_projections: int, angular_range: float) -> np.ndarray:
    """Central ray unit vectors ``(cos t, sin t)`` in ``(x, y)`` order, one row per view."""
    theta = projection_angles(n_projections, angular_range)
    return np.stack([np.cos(theta), np.sin(theta)], axis=1)


def circular_trajectory_3d(
    volume: VolumeSpec,
    detector: DetectorSpec,
    n_projections: int,
    angular_range: float,
    sid: float,
    sdd: float,
) -> np.ndarray:
    """3x4 projection matrices ``K [R | t]`` for a circular cone-beam orbit.

    At angle ``t`` the central ray points along ``(cos t, sin t, 0)``, the
    source sits at ``-sid`` along it and the detector ``u`` axis is
    ``(-sin t, cos t, 0)``, ``v`` is ``+z``. Matrices map homogeneous world
    points (mm) to homogeneous detector pixel indices ``(u, v, 1)``; the depth
    component of the iso-center equals ``sid``.
    """
    if volume.ndim != 3 or len(detector.shape) != 2:
        raise ValueError("cone-beam trajectory needs a 3D volume and a 2D detector")
    _check_distances(sid, sdd)
    theta = projection_angles(n_projections, angular_range)
    dv, du = detector.spacing
    # principal point in pixel index units, from the detector origin convention
    cu = -detector.origin[1] / du
    cv = -detector.origin[0] / dv
    intrinsics = np.array([[sdd / du, 0.0, cu], [0.0, sdd / dv, cv], [0.0, 0.0, 1.0]])
    mats = np.empty((n_projections, 3, 4))
    for i, t in enumerate(theta):
        c, s = math.cos(t), math.sin(t)
        rot = np.array([[-s, c, 0.0], [0.0, 0.0, 1.0], [c, s, 0.0]])
        extr = np.hstack([rot, np.array([[0.0], [0.0], [sid]])])
        mats[i] = intrinsics @ extr
    return mats


def normalize_projection_matrices(matrices, sid: float) -> np.ndarray:
    """Rescale each matrix so the iso-center depth equals ``sid``.

    Calibrated matrices are only defined up to scale (and sign); this fixes
    both so that homogeneous depths are in mm along the principal ray.
    """
    mats = np.array(matrices, dtype=float).reshape(-1, 3, 4)
    depth = mats[:, 2, 3]
    if np.any(np.abs(depth) < 1e-12):
        raise ValueError("projection matrix maps the iso-center to infinity")
    mats *= (sid / depth)[:, None, None]
    for m in mats:
        if np.linalg.matrix_rank(m) != 3:
            raise ValueError("projection matrix must have rank 3")
    return mats


def source_positions(matrices: np.ndarray) -> np.ndarray:
    """Dehomogenized null space ``-M^-1 p4`` of each projection matrix."""
    mats = np.asarray(matrices, dtype=float).reshape(-1, 3, 4)
    out = np.empty((len(mats), 3))
    for i, m in enumerate(mats):
        try:
            out[i] = -np.linalg.solve(m[:, :3], m[:, 3])
        except np.linalg.LinAlgError as exc:
            raise ValueError(f"projection matrix {i} has a singular 3x3 block") from exc
    return out


def _check_distances(sid: float, sdd: float) -> None:
    if not 0 < sid < sdd:
        raise ValueError(f"need 0 < SID < SDD, got SID={sid} SDD={sdd}")


@dataclass(frozen=True)
class Geometry2DParallel:
    volume: VolumeSpec
    detector: DetectorSpec
    n_projections: int
    angular_range: float
    ray_vectors: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.volume.ndim != 2 or len(self.detector.shape) != 1:
            raise ValueError("2D geometry needs a 2D volume and a 1D detector")
        if self.ray_vectors is None:
            rays = circular_trajectory_2d(self.n_projections, self.angular_range)
        else:
            rays = np.asarray(self.ray_vectors, dtype=float).reshape(-1, 2)
            if len(rays) != self.n_projections:
                raise ValueError("need one ray vector per projection")
            if np.any(np.abs(np.linalg.norm(rays, axis=1) - 1.0) > 1e-9):
                raise ValueError("ray vectors must have unit norm")
        rays.setflags(write=False)
        object.__setattr__(self, "ray_vectors", rays)

    @property
    def angles(self) -> np.ndarray:
        return np.arctan2(self.ray_vectors[:, 1], self.ray_vectors[:, 0])

    @property
    def sinogram_shape(self) -> tuple[int, ...]:
        return (self.n_projections, *self.detector.shape)


@dataclass(frozen=True)
class Geometry2DFan(Geometry2DParallel):
    sid: float = field(kw_only=True)
    sdd: float = field(kw_only=True)

    def __post_init__(self):
        _check_distances(self.sid, self.sdd)
        super().__post_init__()

    @property
    def fan_half_angle(self) -> float:
        half_width = max(abs(self.detector.origin[0]), abs(self.detector.coordinates()[-1]))
        half_width += self.detector.spacing[0] / 2
        return math.atan(half_width / self.sdd)


@dataclass(frozen=True)
class Geometry3DCone:
    volume: VolumeSpec
    detector: DetectorSpec
    n_projections: int
    angular_range: float
    sid: float
    sdd: float
    projection_matrices: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.volume.ndim != 3 or len(self.detector.shape) != 2:
            raise ValueError("cone geometry needs a 3D volume and a 2D detector")
        _check_distances(self.sid, self.sdd)
        if self.projection_matrices is None:
            mats = circular_trajectory_3d(
                self.volume, self.detector, self.n_projections, self.angular_range, self.sid, self.sdd
            )
        else:
            mats = normalize_projection_matrices(self.projection_matrices, self.sid)
            if len(mats) != self.n_projections:
                raise ValueError("need one projection matrix per projection")
        mats.setflags(write=False)
        object.__setattr__(self, "projection_matrices", mats)

    @property
    def angles(self) -> np.ndarray:
        src = source_positions(self.projection_matrices)
        return np.arctan2(-src[:, 1], -src[:, 0])

    @property
    def sinogram_shape(self) -> tuple[int, ...]:
        return (self.n_projections, *self.detector.shape)

    @property
    def fan_half_angle(self) -> float:
        coords = self.detector.coordinates(1)
        half_width = max(abs(coords[0]), abs(coords[-1])) + self.detector.spacing[1] / 2
        return math.atan(half_width / self.sdd)


Geometry = Geometry2DParallel | Geometry2DFan | Geometry3DCone


def geometry_from_dict(cfg: dict) -> Geometry:
    """Build a geometry from the JSON schema used by the command line tools."""
    kind = cfg["type"]
    volume = VolumeSpec(tuple(cfg["volume_shape"]), tuple(np.atleast_1d(cfg["volume_spacing"])))
    detector = DetectorSpec(tuple(np.atleast_1d(cfg["detector_shape"])),
                            tuple(np.atleast_1d(cfg["detector_spacing"])))
    n = int(cfg["n_projections"])
    angular_range = math.radians(float(cfg["angular_range_deg"]))
    if kind == "parallel2d":
        return Geometry2DParallel(volume, detector, n, angular_range)
    if kind == "fan2d":
        return Geometry2DFan(volume, detector, n, angular_range, sid=float(cfg["sid"]), sdd=float(cfg["sdd"]))
    if kind == "cone3d":
        mats = cfg.get("projection_matrices")
        if mats is not None:
            mats = np.asarray(mats, dtype=float).reshape(-1, 3, 4)
        return Geometry3DCone(volume, detector, n, angular_range, float(cfg["sid"]), float(cfg["sdd"]), mats)
    raise ValueError(f"unknown geometry type {kind!r}")


def geometry_to_dict(geo: Geometry, include_matrices: bool = False) -> dict:
    kinds = {Geometry2DFan: "fan2d", Geometry2DParallel: "parallel2d", Geometry3DCone: "cone3d"}
    out = {
        "type": kinds[type(geo)],
        "volume_shape": list(geo.volume.shape),
        "volume_spacing": list(geo.volume.spacing),
        "detector_shape": list(geo.detector.shape),
        "detector_spacing": list(geo.detector.spacing),
        "n_projections": geo.n_projections,
        "angular_range_deg": math.degrees(geo.angular_range),
    }
    if isinstance(geo, (Geometry2DFan, Geometry3DCone)):
        out["sid"] = geo.sid
        out["sdd"] = geo.sdd
    if include_matrices and isinstance(geo, Geometry3DCone):
        out["projection_matrices"] = geo.projection_matrices.reshape(-1, 12).tolist()
    return out


def load_geometry(path) -> Geometry:
    return geometry_from_dict(json.loads(Path(path).read_text()))
