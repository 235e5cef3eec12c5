"""Fourier-domain reconstruction filters and projection-domain weights."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Geometry2DFan, Geometry3DCone, projection_angles

PARKER_TOLERANCE = 1e-6


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def next_power_of_two(n: int) -> int:
    return 1 << max(0, math.ceil(math.log2(max(n, 1))))


def default_padding(detector_bins: int) -> int:
    """Smallest power of two holding twice the detector row, against circular wrap."""
    return next_power_of_two(2 * detector_bins)


def fft_1d(signal, inverse: bool = False) -> np.ndarray:
    """DFT of a power-of-two length sequence; the inverse carries the ``1/n``."""
    signal = np.asarray(signal)
    n = signal.shape[-1]
    if not _is_power_of_two(n):
        raise ValueError(f"FFT length must be a power of two, got {n}")
    return np.fft.ifft(signal) if inverse else np.fft.fft(signal)


@dataclass(frozen=True)
class Filter1D:
    """Real per-bin weights of a diagonal filter in the padded Fourier domain."""

    weights: np.ndarray
    detector_spacing: float = 1.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or not _is_power_of_two(len(w)):
            raise ValueError("filter weights must be a 1D array of power-of-two length")
        if not np.all(np.isfinite(w)):
            raise ValueError("filter weights must be finite")
        object.__setattr__(self, "weights", w)

    @property
    def n_bins(self) -> int:
        return len(self.weights)


def _check_padding(detector_bins: int, padded_n: int | None) -> int:
    if padded_n is None:
        return default_padding(detector_bins)
    if padded_n < detector_bins or not _is_power_of_two(padded_n):
        raise ValueError(f"padded_n={padded_n} must be a power of two >= {detector_bins}")
    return padded_n


def ramp_filter(detector_bins: int, spacing: float = 1.0, padded_n: int | None = None) -> Filter1D:
    """Continuous ramp ``|f|`` sampled on the padded DFT grid."""
    n = _check_padding(detector_bins, padded_n)
    return Filter1D(np.abs(np.fft.fftfreq(n, d=spacing)), spacing)


def ramlak_kernel(n: int, spacing: float = 1.0) -> np.ndarray:
    """Band-limited ramp in the spatial domain, wrapped into a length ``n`` window."""
    h = np.zeros(n)
    h[0] = 1.0 / (4.0 * spacing**2)
    m = np.arange(1, n // 2 + 1)
    vals = np.where(m % 2 == 1, -1.0 / (m**2 * math.pi**2 * spacing**2), 0.0)
    h[m] = vals
    h[n - m[m < n - m]] = vals[m < n - m]
    return h


def ramlak_filter(detector_bins: int, spacing: float = 1.0, padded_n: int | None = None) -> Filter1D:
    """Ram-Lak filter: DFT of the discrete spatial kernel, times the sample spacing."""
    n = _check_padding(detector_bins, padded_n)
    return Filter1D(np.real(np.fft.fft(ramlak_kernel(n, spacing))) * spacing, spacing)


def make_filter(kind: str, detector_bins: int, spacing: float = 1.0, padded_n: int | None = None) -> Filter1D:
    kinds = {"ramp": ramp_filter, "ramlak": ramlak_filter, "ram-lak": ramlak_filter}
    try:
        return kinds[kind.lower()](detector_bins, spacing, padded_n)
    except KeyError:
        raise ValueError(f"unknown filter {kind!r}; choose 'ramp' or 'ramlak'") from None


def _filter_weights(filt) -> np.ndarray:
    return filt.weights if isinstance(filt, Filter1D) else np.asarray(filt, dtype=float)


def apply_filter(sino, filt) -> np.ndarray:
    """Filter every detector row (last axis) with a diagonal Fourier-domain filter.

    Rows are zero padded to the filter length and truncated back afterwards.
    ``filt`` may be a :class:`Filter1D` or a bare weight array.
    """
    sino = np.asarray(sino, dtype=float)
    weights = _filter_weights(filt)
    n = len(weights)
    width = sino.shape[-1]
    if n < width or not _is_power_of_two(n):
        raise ValueError(f"filter has {n} bins, detector rows have {width}")
    spectrum = fft_1d(_pad(sino, n))
    return np.real(fft_1d(spectrum * weights, inverse=True))[..., :width]


def filter_weight_gradient(sino, upstream, n_bins: int) -> np.ndarray:
    """Gradient of ``sum(upstream * apply_filter(sino, K))`` with respect to ``K``."""
    sino = np.asarray(sino, dtype=float)
    spec_in = fft_1d(_pad(sino, n_bins))
    spec_up = fft_1d(_pad(np.asarray(upstream, dtype=float), n_bins))
    prod = np.real(np.conj(spec_in) * spec_up) / n_bins
    return prod.reshape(-1, n_bins).sum(axis=0)


def _pad(rows: np.ndarray, n: int) -> np.ndarray:
    pad = [(0, 0)] * (rows.ndim - 1) + [(0, n - rows.shape[-1])]
    return np.pad(rows, pad)


def cosine_weight(u, v, sid: float) -> np.ndarray:
    """``sid / sqrt(sid^2 + u^2 + v^2)`` for detector coordinates scaled to the iso-center."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return sid / np.sqrt(sid**2 + u**2 + v**2)


def cosine_weights(geo) -> np.ndarray:
    """Per-pixel cosine pre-weighting, one detector row (fan) or frame (cone).

    Physical detector coordinates are scaled by ``sid / sdd`` to the virtual
    detector through the iso-center first, so the weight is the cosine of the
    ray angle to the principal ray.
    """
    if isinstance(geo, Geometry3DCone):
        scale = geo.sid / geo.sdd
        v = geo.detector.coordinates(0)[:, None] * scale
        u = geo.detector.coordinates(1)[None, :] * scale
        return cosine_weight(u, v, geo.sid)
    if isinstance(geo, Geometry2DFan):
        u = geo.detector.coordinates() * (geo.sid / geo.sdd)
        return cosine_weight(u, 0.0, geo.sid)
    raise TypeError("cosine weights need a divergent (fan or cone) geometry")


def parker_weight(beta, gamma, delta: float) -> np.ndarray:
    """Parker redundancy weight for source angle ``beta`` and fan angle ``gamma``.

    ``delta`` is half the over-scan beyond 180 degrees; for a minimal short
    scan it equals the fan half angle. The scan covers ``[0, pi + 2 delta]``.
    """
    beta, gamma = np.broadcast_arrays(np.asarray(beta, dtype=float), np.asarray(gamma, dtype=float))
    w = np.zeros(beta.shape)
    lo = delta - gamma
    hi = delta + gamma
    with np.errstate(divide="ignore", invalid="ignore"):
        start = (beta >= 0) & (beta < 2 * lo)
        w[start] = np.sin(math.pi / 4 * beta[start] / lo[start]) ** 2
        middle = (beta >= 2 * lo) & (beta <= math.pi - 2 * gamma)
        w[middle] = 1.0
        end = (beta > math.pi - 2 * gamma) & (beta <= math.pi + 2 * delta)
        w[end] = np.sin(math.pi / 4 * (math.pi + 2 * delta - beta[end]) / hi[end]) ** 2
    return w


def parker_weights(geo) -> np.ndarray:
    """Parker weight map shaped like the sinogram of a fan or cone short scan."""
    if not isinstance(geo, (Geometry2DFan, Geometry3DCone)):
        raise TypeError("Parker weights need a fan or cone geometry")
    gamma_max = geo.fan_half_angle
    if geo.angular_range < math.pi + 2 * gamma_max - PARKER_TOLERANCE:
        raise ValueError(
            f"angular range {math.degrees(geo.angular_range):.2f} deg is below the short-scan "
            f"minimum {math.degrees(math.pi + 2 * gamma_max):.2f} deg"
        )
    if geo.angular_range >= 2 * math.pi:
        raise ValueError("Parker weights are defined for short scans below 360 degrees")
    delta = max((geo.angular_range - math.pi) / 2, gamma_max)
    beta = projection_angles(geo.n_projections, geo.angular_range)
    u = geo.detector.coordinates(-1)
    gamma = np.arctan(u / geo.sdd)
    w = parker_weight(beta[:, None], gamma[None, :], delta)
    if isinstance(geo, Geometry3DCone):
        w = np.repeat(w[:, None, :], geo.detector.shape[0], axis=1)
    return w
