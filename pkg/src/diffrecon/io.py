"""File formats: raw little-endian float32 images with a JSON header, PGM and CSV.

An image ``name.json`` holds ``shape``, ``spacing``, ``origin``, ``dtype``
(always ``"f32le"``) and ``data_file``, the C-order payload next to it.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .filtering import Filter1D

DTYPE_TAG = "f32le"


class FormatError(ValueError):
    """Raised for malformed or inconsistent files."""


@dataclass
class Image:
    data: np.ndarray
    spacing: tuple[float, ...] | None = None
    origin: tuple[float, ...] | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data)
        nd = self.data.ndim
        self.spacing = tuple(float(s) for s in (self.spacing or (1.0,) * nd))
        if len(self.spacing) != nd:
            raise ValueError("spacing needs one entry per axis")
        if self.origin is None:
            self.origin = tuple(-(n - 1) * s / 2 for n, s in zip(self.data.shape, self.spacing))
        self.origin = tuple(float(o) for o in self.origin)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def coordinates(self, axis: int) -> np.ndarray:
        return self.origin[axis] + np.arange(self.shape[axis]) * self.spacing[axis]


def _header_path(path) -> Path:
    path = Path(path)
    return path if path.suffix == ".json" else path.with_suffix(path.suffix + ".json")


def write_image(path, image: Image) -> Path:
    """Write header and payload; returns the header path."""
    header_path = _header_path(path)
    data_path = header_path.with_suffix(".raw")
    data = np.ascontiguousarray(image.data, dtype="<f4")
    if not np.all(np.isfinite(data)):
        raise ValueError("image contains non-finite values")
    header = {
        "shape": list(data.shape),
        "spacing": list(image.spacing),
        "origin": list(image.origin),
        "dtype": DTYPE_TAG,
        "data_file": data_path.name,
    }
    header_path.parent.mkdir(parents=True, exist_ok=True)
    data_path.write_bytes(data.tobytes())
    header_path.write_text(json.dumps(header, indent=2) + "\n")
    return header_path


def read_image(path) -> Image:
    header_path = _header_path(path)
    try:
        header = json.loads(header_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed image header {header_path}: {exc}") from exc
    try:
        shape = tuple(int(n) for n in header["shape"])
        dtype = header["dtype"]
        data_file = header["data_file"]
    except (KeyError, TypeError) as exc:
        raise FormatError(f"image header {header_path} is missing {exc}") from exc
    if dtype != DTYPE_TAG:
        raise FormatError(f"unsupported dtype {dtype!r}, expected {DTYPE_TAG!r}")
    payload = (header_path.parent / data_file).read_bytes()
    expected = 4 * math.prod(shape)
    if len(payload) != expected:
        raise FormatError(f"payload has {len(payload)} bytes, header implies {expected}")
    data = np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float32)
    return Image(data, header.get("spacing"), header.get("origin"))


def window_to_gray(values, lo: float, hi: float) -> np.ndarray:
    """``floor(255 (v - lo) / (hi - lo))`` clamped to ``[0, 255]``."""
    if lo >= hi:
        raise ValueError(f"window needs lo < hi, got [{lo}, {hi}]")
    scaled = np.floor(255.0 * (np.asarray(values, dtype=float) - lo) / (hi - lo))
    return np.clip(scaled, 0, 255).astype(np.uint8)


def export_pgm(image, window, path) -> None:
    """Binary 8-bit PGM of a 2D image (3D volumes export their central slice)."""
    data = image.data if isinstance(image, Image) else np.asarray(image)
    if data.ndim == 3:
        data = data[data.shape[0] // 2]
    if data.ndim != 2:
        raise ValueError("PGM export needs a 2D image")
    gray = window_to_gray(data, *window)
    h, w = gray.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(gray.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P5":
        raise FormatError("not a binary PGM")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4], dtype=np.uint8, count=w * h).reshape(h, w)


def line_profile(image, axis: int, index=None, volume=None) -> np.ndarray:
    """``(position_mm, value)`` rows along ``axis``.

    ``index`` fixes the remaining axes (an int in 2D, a tuple in 3D); ``None``
    takes the central line. Spacing and origin come from ``image`` when it is
    an :class:`Image`, otherwise from ``volume``.
    """
    if isinstance(image, Image):
        data, spacing, origin = image.data, image.spacing, image.origin
    else:
        data = np.asarray(image)
        if volume is None:
            ref = Image(data)
            spacing, origin = ref.spacing, ref.origin
        else:
            spacing, origin = volume.spacing, volume.origin
    nd = data.ndim
    axis = axis % nd
    others = [a for a in range(nd) if a != axis]
    if index is None:
        index = tuple(data.shape[a] // 2 for a in others)
    index = (index,) if np.isscalar(index) else tuple(index)
    if len(index) != len(others):
        raise ValueError(f"need {len(others)} fixed indices, got {len(index)}")
    sel = [slice(None)] * nd
    for a, i in zip(others, index):
        if not 0 <= i < data.shape[a]:
            raise IndexError(f"index {i} out of range for axis {a} of size {data.shape[a]}")
        sel[a] = i
    values = np.asarray(data[tuple(sel)], dtype=float)
    positions = origin[axis] + np.arange(data.shape[axis]) * spacing[axis]
    return np.column_stack([positions, values])


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def write_profile_csv(path, rows) -> None:
    _write_rows(path, ["position_mm", "value"], np.asarray(rows).tolist())


def read_profile_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def write_loss_csv(path, loss_log) -> None:
    header = ["iteration", "loss"] + (["metric"] if loss_log and len(loss_log[0]) > 2 else [])
    _write_rows(path, header, loss_log)


def read_loss_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def write_filter_csv(path, filt: Filter1D) -> None:
    _write_rows(path, ["bin_index", "weight"], enumerate(filt.weights))


def read_filter_csv(path, detector_spacing: float = 1.0) -> Filter1D:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    idx = rows[:, 0].astype(int)
    if not np.array_equal(idx, np.arange(len(idx))):
        raise FormatError("filter CSV bin indices must run 0..n-1")
    return Filter1D(rows[:, 1], detector_spacing)
