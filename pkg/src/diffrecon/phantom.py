"""Voxelized numerical phantoms.

Primitives are additive and tested at voxel centers (no anti-aliasing).
Primitive centers and semi-axes are given in world ``(x, y[, z])`` order and
millimetres; the returned arrays follow the volume's ``(z,) y, x`` axis order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import VolumeSpec

# Modified Shepp-Logan (Toft), higher contrast than the 1974 original so the
# image lives in [0, 1]. Columns: x0, y0, a, b, angle (deg), intensity; in
# units of the half field of view.
SHEPP_LOGAN_2D = np.array([
    [0.0, 0.0, 0.69, 0.92, 0.0, 1.0],
    [0.0, -0.0184, 0.6624, 0.874, 0.0, -0.8],
    [0.22, 0.0, 0.11, 0.31, -18.0, -0.2],
    [-0.22, 0.0, 0.16, 0.41, 18.0, -0.2],
    [0.0, 0.35, 0.21, 0.25, 0.0, 0.1],
    [0.0, 0.1, 0.046, 0.046, 0.0, 0.1],
    [0.0, -0.1, 0.046, 0.046, 0.0, 0.1],
    [-0.08, -0.605, 0.046, 0.023, 0.0, 0.1],
    [0.0, -0.606, 0.023, 0.023, 0.0, 0.1],
    [0.06, -0.605, 0.023, 0.046, 0.0, 0.1],
])

# Same in-plane layout with the z extents of Schabel's 3D extension.
# Columns: x0, y0, z0, a, b, c, angle about z (deg), intensity.
SHEPP_LOGAN_3D = np.array([
    [0.0, 0.0, 0.0, 0.69, 0.92, 0.81, 0.0, 1.0],
    [0.0, -0.0184, 0.0, 0.6624, 0.874, 0.78, 0.0, -0.8],
    [0.22, 0.0, 0.0, 0.11, 0.31, 0.22, -18.0, -0.2],
    [-0.22, 0.0, 0.0, 0.16, 0.41, 0.28, 18.0, -0.2],
    [0.0, 0.35, -0.15, 0.21, 0.25, 0.41, 0.0, 0.1],
    [0.0, 0.1, 0.25, 0.046, 0.046, 0.05, 0.0, 0.1],
    [0.0, -0.1, 0.25, 0.046, 0.046, 0.05, 0.0, 0.1],
    [-0.08, -0.605, 0.0, 0.046, 0.023, 0.05, 0.0, 0.1],
    [0.0, -0.606, 0.0, 0.023, 0.023, 0.02, 0.0, 0.1],
    [0.06, -0.605, 0.0, 0.023, 0.046, 0.02, 0.0, 0.1],
])


@dataclass(frozen=True)
class Ellipse:
    """Ellipse (2 semi-axes) or ellipsoid (3) rotated by ``angle`` radians about z."""

    center: tuple[float, ...]
    semi_axes: tuple[float, ...]
    angle: float = 0.0
    intensity: float = 1.0

    def __post_init__(self):
        if len(self.center) != len(self.semi_axes) or len(self.center) not in (2, 3):
            raise ValueError("center and semi_axes need matching length 2 or 3")
        if min(self.semi_axes) <= 0:
            raise ValueError("semi-axes must be positive")

    def contains(self, *coords) -> np.ndarray:
        local = _rotate_local(coords, self.center, self.angle)
        r2 = sum((c / a) ** 2 for c, a in zip(local, self.semi_axes))
        return r2 <= 1.0


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned rectangle or box (after rotation by ``angle`` about z)."""

    center: tuple[float, ...]
    half_sizes: tuple[float, ...]
    angle: float = 0.0
    intensity: float = 1.0

    def __post_init__(self):
        if len(self.center) != len(self.half_sizes) or len(self.center) not in (2, 3):
            raise ValueError("center and half_sizes need matching length 2 or 3")
        if min(self.half_sizes) <= 0:
            raise ValueError("half sizes must be positive")

    def contains(self, *coords) -> np.ndarray:
        local = _rotate_local(coords, self.center, self.angle)
        inside = np.ones(np.shape(local[0]), dtype=bool)
        for c, h in zip(local, self.half_sizes):
            inside &= np.abs(c) <= h
        return inside


def circle(center, radius: float, intensity: float = 1.0) -> Ellipse:
    return Ellipse(tuple(center), (radius, radius), 0.0, intensity)


def sphere(center, radius: float, intensity: float = 1.0) -> Ellipse:
    return Ellipse(tuple(center), (radius, radius, radius), 0.0, intensity)


def _rotate_local(coords, center, angle):
    d = [c - c0 for c, c0 in zip(coords, center)]
    ca, sa = math.cos(angle), math.sin(angle)
    local = [d[0] * ca + d[1] * sa, -d[0] * sa + d[1] * ca]
    return local + d[2:]


def _world_grid(volume: VolumeSpec) -> list[np.ndarray]:
    """Voxel-center coordinates as broadcastable arrays in ``(x, y[, z])`` order."""
    axes = [volume.coordinates(a) for a in range(volume.ndim)]
    grids = np.meshgrid(*axes, indexing="ij", sparse=True)
    return grids[::-1]


def rasterize_primitives(primitives, volume: VolumeSpec) -> np.ndarray:
    """Sum of the intensities of every primitive containing each voxel center."""
    out = np.zeros(volume.shape)
    coords = _world_grid(volume)
    for prim in primitives:
        if len(prim.center) != volume.ndim:
            raise ValueError(f"{len(prim.center)}D primitive on a {volume.ndim}D volume")
        out += prim.intensity * prim.contains(*coords)
    return out


def _fov(volume: VolumeSpec):
    """Center and half extent of the volume, in (x, y[, z]) order."""
    center = [o + (n - 1) * s / 2 for o, n, s in zip(volume.origin, volume.shape, volume.spacing)]
    half = [n * s / 2 for n, s in zip(volume.shape, volume.spacing)]
    return center[::-1], half[::-1]


def shepp_logan_primitives(volume: VolumeSpec) -> list[Ellipse]:
    """Modified Shepp-Logan ellipses (or ellipsoids) scaled to fill ``volume``."""
    center, half = _fov(volume)
    table = SHEPP_LOGAN_2D if volume.ndim == 2 else SHEPP_LOGAN_3D
    d = volume.ndim
    prims = []
    for row in table:
        c = tuple(c0 + r * h for c0, r, h in zip(center, row[:d], half))
        axes = tuple(r * h for r, h in zip(row[d:2 * d], half))
        prims.append(Ellipse(c, axes, math.radians(row[2 * d]), float(row[2 * d + 1])))
    return prims


def _shepp_logan(volume: VolumeSpec) -> np.ndarray:
    img = rasterize_primitives(shepp_logan_primitives(volume), volume)
    # 1 - 0.8 - 0.2 leaves -5e-17 in the ventricles
    return np.round(img, 12) + 0.0


def shepp_logan_2d(volume: VolumeSpec) -> np.ndarray:
    if volume.ndim != 2:
        raise ValueError("shepp_logan_2d needs a 2D volume")
    return _shepp_logan(volume)


def shepp_logan_3d(volume: VolumeSpec) -> np.ndarray:
    if volume.ndim != 3:
        raise ValueError("shepp_logan_3d needs a 3D volume")
    return _shepp_logan(volume)


def gaussian_blobs(volume: VolumeSpec, rng: np.random.Generator, n_blobs: int = 8) -> np.ndarray:
    """Sum of random anisotropic Gaussians: a smooth, nearly band-limited test image.

    Centers lie within 45% of the half field of view, widths between 6% and
    20% of it, amplitudes in [0.2, 1].
    """
    center, half = _fov(volume)
    coords = _world_grid(volume)
    out = np.zeros(volume.shape)
    for _ in range(n_blobs):
        c = [c0 + h * rng.uniform(-0.45, 0.45) for c0, h in zip(center, half)]
        sig = [h * rng.uniform(0.06, 0.2) for h in half]
        amp = rng.uniform(0.2, 1.0)
        r2 = sum(((x - x0) / s) ** 2 for x, x0, s in zip(coords, c, sig))
        out += amp * np.exp(-0.5 * r2)
    return out
