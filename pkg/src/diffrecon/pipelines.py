"""Analytic reconstructions and the three trainable experiments.

Normalization: filtered back projections are scaled by the angular step per
unit redundancy, ``pi / n_projections`` for scans where every ray is seen on
average ``range / pi`` times. With Parker weights the redundancy is handled
by the weights and the scale is ``range / n_projections``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import io
from .filtering import (
    Filter1D,
    apply_filter,
    cosine_weights,
    make_filter,
    parker_weights,
    ramlak_filter,
    ramp_filter,
)
from .geometry import (
    DetectorSpec,
    Geometry2DFan,
    Geometry2DParallel,
    Geometry3DCone,
    VolumeSpec,
    geometry_from_dict,
)
from .graph import Graph, train
from .phantom import Ellipse, gaussian_blobs, rasterize_primitives, shepp_logan_2d, shepp_logan_3d
from .projector import backproject, backproject_parallel_2d, forward_project

log = logging.getLogger(__name__)


def rmse(a, b, mask=None) -> float:
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if mask is not None:
        d = d[mask]
    return float(np.sqrt(np.mean(d**2)))


def disk_mask(volume: VolumeSpec, fraction: float) -> np.ndarray:
    """Voxels within ``fraction`` of the half field of view from the center (in-plane for 3D)."""
    y = volume.coordinates(volume.ndim - 2)[:, None]
    x = volume.coordinates(volume.ndim - 1)[None, :]
    radius = fraction * min(volume.shape[-1] * volume.spacing[-1], volume.shape[-2] * volume.spacing[-2]) / 2
    mask = x**2 + y**2 <= radius**2
    return np.broadcast_to(mask, volume.shape)


def add_gaussian_noise(sino, relative_std: float, seed: int | None = None) -> np.ndarray:
    """Add white Gaussian noise with std ``relative_std * max(sino)``."""
    if relative_std < 0:
        raise ValueError("relative_std must be >= 0")
    sino = np.asarray(sino, dtype=float)
    if relative_std == 0:
        return sino.copy()
    rng = np.random.default_rng(seed)
    return sino + rng.normal(0.0, relative_std * float(np.max(sino)), size=sino.shape)


def fbp_reconstruct(sino, geo: Geometry2DParallel, filter_kind: str = "ramlak", padded_n: int | None = None):
    """Parallel-beam filtered back projection."""
    if isinstance(geo, (Geometry2DFan, Geometry3DCone)):
        raise TypeError("fbp_reconstruct is for parallel geometries; use fdk_reconstruct")
    filt = make_filter(filter_kind, geo.detector.shape[0], geo.detector.spacing[0], padded_n)
    return backproject_parallel_2d(apply_filter(sino, filt), geo) * (math.pi / geo.n_projections)


def fdk_reconstruct(sino, geo, redundancy="parker", filter_kind: str = "ramlak"):
    """Feldkamp-Davis-Kress reconstruction (also accepts fan-beam geometries).

    Steps: cosine weights, optional redundancy weights, row-wise filtering
    on the virtual detector through the iso-center, then the distance
    weighted back projection.

    ``redundancy`` is ``"parker"``, ``None`` (no redundancy weighting) or a
    weight array broadcastable to the sinogram whose conjugate rays sum to one.
    """
    if not isinstance(geo, (Geometry2DFan, Geometry3DCone)):
        raise TypeError("fdk_reconstruct needs a fan or cone geometry")
    sino = np.asarray(sino, dtype=float)
    weighted = sino * cosine_weights(geo)
    if redundancy is None:
        scale = math.pi / geo.n_projections
    else:
        w = parker_weights(geo) if isinstance(redundancy, str) and redundancy == "parker" else np.asarray(redundancy)
        weighted = weighted * w
        scale = geo.angular_range / geo.n_projections
    du = geo.detector.spacing[-1]
    filt = make_filter(filter_kind, geo.detector.shape[-1], du * geo.sid / geo.sdd)
    return backproject(apply_filter(weighted, filt), geo) * scale


def fbp_graph(geo, filter_weights, trainable: bool = False, redundancy=None) -> tuple[Graph, object]:
    """Reconstruction network ``scale * A^T F^H K F [W] p`` with the filter as a parameter.

    Returns the graph and its output node. The input node is ``"sinogram"``,
    the filter parameter ``"filter"``.
    """
    g = Graph()
    node = g.input("sinogram")
    if isinstance(geo, (Geometry2DFan, Geometry3DCone)):
        w = cosine_weights(geo)
        scale = math.pi / geo.n_projections
        if redundancy is not None:
            w = w * (parker_weights(geo) if isinstance(redundancy, str) else np.asarray(redundancy))
            scale = geo.angular_range / geo.n_projections
        node = g.multiply_weights(node, g.parameter("weights", w, trainable=False))
    else:
        scale = math.pi / geo.n_projections
    k = g.parameter("filter", filter_weights, trainable=trainable)
    node = g.fourier_filter(node, k)
    node = g.backproject(node, geo)
    return g, g.scale(node, scale, name="reconstruction")


# -- experiment configuration ---------------------------------------------


@dataclass
class ExperimentConfig:
    geometry: dict
    phantom: str = "shepp-logan"
    noise: float = 0.0
    learning_rate: float = 1e-3
    iterations: int = 100
    tv_weight: float = 0.0
    seed: int = 0
    output_dir: str | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")
        if self.tv_weight < 0:
            raise ValueError("tv_weight must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")

    @classmethod
    def from_dict(cls, cfg: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__ if f != "extra"}
        extra = {k: v for k, v in cfg.items() if k not in known}
        return cls(**{k: v for k, v in cfg.items() if k in known}, extra=extra)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    @classmethod
    def default(cls, name: str) -> "ExperimentConfig":
        """Shipped configuration: ``"fdk"``, ``"learn_filter"`` or ``"iterative_tv"``."""
        text = resources.files("diffrecon").joinpath("configs", f"{name}.json").read_text()
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(d.pop("extra"))
        return d

    def make_geometry(self):
        return geometry_from_dict(self.geometry)


def make_phantom(name: str, volume: VolumeSpec) -> np.ndarray:
    if name in ("shepp-logan", "shepp-logan-2d", "shepp-logan-3d"):
        return shepp_logan_2d(volume) if volume.ndim == 2 else shepp_logan_3d(volume)
    if name == "disk":
        half = min(n * s for n, s in zip(volume.shape, volume.spacing)) / 2
        axes = (0.4 * half,) * volume.ndim
        return rasterize_primitives([Ellipse((0.0,) * volume.ndim, axes)], volume)
    raise ValueError(f"unknown phantom {name!r}")


def random_ellipse_phantom(volume: VolumeSpec, rng: np.random.Generator, n_ellipses: int = 6) -> np.ndarray:
    """A support ellipse filled with random additive ellipses, for training data."""
    half = [n * s / 2 for n, s in zip(volume.shape, volume.spacing)][::-1]
    prims = [Ellipse((0.0, 0.0), (0.7 * half[0], 0.85 * half[1]), 0.0, 0.5)]
    for _ in range(n_ellipses):
        c = rng.uniform(-0.4, 0.4, size=2) * half
        axes = rng.uniform(0.05, 0.25, size=2) * half
        prims.append(Ellipse(tuple(c), tuple(axes), rng.uniform(0, math.pi), rng.uniform(-0.2, 0.4)))
    return np.clip(rasterize_primitives(prims, volume), 0.0, None)


def _write_outputs(cfg: ExperimentConfig, images: dict, loss_log=None, filters=None, profiles=None):
    if not cfg.output_dir:
        return
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, (data, spacing) in images.items():
        io.write_image(out / f"{name}.json", io.Image(data, spacing))
    if loss_log is not None:
        io.write_loss_csv(out / "loss.csv", loss_log)
    for name, filt in (filters or {}).items():
        io.write_filter_csv(out / f"{name}.csv", filt)
    for name, rows in (profiles or {}).items():
        io.write_profile_csv(out / f"{name}.csv", rows)


# -- experiments -------------------------------------------------------------


@dataclass
class FDKResult:
    reconstruction: np.ndarray
    phantom: np.ndarray
    reconstruction_no_parker: np.ndarray | None = None


def experiment_fdk(cfg: ExperimentConfig) -> FDKResult:
    """Short-scan cone-beam FDK of the 3D Shepp-Logan phantom with Parker weights."""
    geo = cfg.make_geometry()
    if not isinstance(geo, Geometry3DCone):
        raise ValueError("the FDK experiment needs a cone3d geometry")
    phantom = make_phantom(cfg.phantom, geo.volume)
    sino = add_gaussian_noise(forward_project(phantom, geo), cfg.noise, cfg.seed)
    rec = fdk_reconstruct(sino, geo, "parker")
    rec_off = fdk_reconstruct(sino, geo, None) if cfg.extra.get("compare_without_parker", True) else None
    mid = geo.volume.shape[0] // 2
    images = {"phantom": (phantom, geo.volume.spacing), "fdk": (rec, geo.volume.spacing)}
    profiles = {
        "profile_phantom": io.line_profile(phantom, 2, (mid, geo.volume.shape[1] // 2), geo.volume),
        "profile_fdk": io.line_profile(rec, 2, (mid, geo.volume.shape[1] // 2), geo.volume),
    }
    _write_outputs(cfg, images, profiles=profiles)
    return FDKResult(rec, phantom, rec_off)


def _training_set(cfg: ExperimentConfig, geo) -> list[tuple[np.ndarray, np.ndarray]]:
    """Numerical training pairs. ``phantom: "gaussian-blobs"`` draws only random
    smooth images; any other name adds random ellipse phantoms to that phantom."""
    rng = np.random.default_rng(cfg.seed)
    n_random = int(cfg.extra.get("n_random_phantoms", 3))
    if cfg.phantom == "gaussian-blobs":
        phantoms = [gaussian_blobs(geo.volume, rng) for _ in range(n_random)]
    else:
        phantoms = [make_phantom(cfg.phantom, geo.volume)]
        phantoms += [random_ellipse_phantom(geo.volume, rng) for _ in range(n_random)]
    return [(forward_project(p, geo), p) for p in phantoms]


@dataclass
class FilterLearningResult:
    learned: Filter1D
    ramp: Filter1D
    ramlak: Filter1D
    loss_log: list

    @property
    def distance_ratio(self) -> float:
        """``|K - ramlak| / |ramp - ramlak|``; 1 at initialization, 0 at Ram-Lak."""
        num = np.linalg.norm(self.learned.weights - self.ramlak.weights)
        return float(num / np.linalg.norm(self.ramp.weights - self.ramlak.weights))


def experiment_learn_filter(cfg: ExperimentConfig) -> FilterLearningResult:
    """Learn the reconstruction filter of a parallel-beam FBP network from a ramp start.

    The only trainable weights are the filter bins. The loss is the summed
    squared error between reconstructions and phantoms over a small set of
    purely numerical training pairs.

    ``padded_n`` in the config sets the filter length (default: twice the
    detector, rounded up to a power of two).
    """
    geo = cfg.make_geometry()
    if type(geo) is not Geometry2DParallel:
        raise ValueError("filter learning needs a parallel2d geometry")
    nb, du = geo.detector.shape[0], geo.detector.spacing[0]
    padded_n = cfg.extra.get("padded_n")
    ramp = ramp_filter(nb, du, padded_n)
    ramlak = ramlak_filter(nb, du, padded_n)
    pairs = _training_set(cfg, geo)

    g = Graph()
    k = g.parameter("filter", ramp.weights, trainable=True)
    losses = []
    for i, _ in enumerate(pairs):
        p = g.input(f"sinogram_{i}")
        x = g.scale(g.backproject(g.fourier_filter(p, k), geo), math.pi / geo.n_projections)
        losses.append(g.l2_loss(x, g.input(f"phantom_{i}")))
    total = losses[0]
    for extra in losses[1:]:
        total = g.add(total, extra)
    feeds = {}
    for i, (s, p) in enumerate(pairs):
        feeds[f"sinogram_{i}"] = s
        feeds[f"phantom_{i}"] = p

    def distance(graph):
        return float(np.linalg.norm(graph["filter"].value - ramlak.weights))

    loss_log = train(g, total, feeds, cfg.learning_rate, cfg.iterations, metric=distance)
    learned = Filter1D(g["filter"].value.copy(), du)
    log.info("filter learning: loss %.4g -> %.4g", loss_log[0][1], loss_log[-1][1])
    _write_outputs(
        cfg,
        {},
        loss_log=loss_log,
        filters={"filter_learned": learned, "filter_ramp": ramp, "filter_ramlak": ramlak},
    )
    return FilterLearningResult(learned, ramp, ramlak, loss_log)


@dataclass
class IterativeResult:
    reconstruction: np.ndarray
    phantom: np.ndarray
    sinogram: np.ndarray
    fbp: np.ndarray
    loss_log: list


def stable_learning_rate(geo, safety: float = 0.9, iterations: int = 30) -> float:
    """Step size ``safety / (2 L)`` for the data term, ``L`` the largest
    eigenvalue of back projection after forward projection (power iteration
    from a fixed start, so the result is reproducible)."""
    x = np.random.default_rng(0).random(geo.volume.shape)
    lam = 0.0
    for _ in range(iterations):
        y = backproject(forward_project(x, geo), geo)
        lam = float(np.linalg.norm(y) / np.linalg.norm(x))
        x = y / np.linalg.norm(y)
    return safety / (2.0 * lam)


def iterative_tv_reconstruct(
    sino,
    geo,
    tv_weight: float,
    learning_rate: float,
    iterations: int,
    initial=None,
) -> tuple[np.ndarray, list]:
    """Minimize ``|A x - p|^2 + tv_weight * TV(x)`` by gradient descent on an additive layer.

    The network is ``zero input + x``, forward projected and compared to the
    sinogram; ``x`` starts at zero unless ``initial`` is given.
    """
    g = Graph()
    zero = g.input("zero")
    x = g.parameter("x", np.zeros(geo.volume.shape) if initial is None else initial, trainable=True)
    volume = g.add(zero, x)
    loss = g.l2_loss(g.forward_project(volume, geo), g.input("sinogram"))
    if tv_weight > 0:
        loss = g.add(loss, g.scale(g.tv_loss(volume), tv_weight))
    feeds = {"zero": np.zeros(geo.volume.shape), "sinogram": np.asarray(sino, dtype=float)}
    loss_log = train(g, loss, feeds, learning_rate, iterations)
    return g["x"].value.copy(), loss_log


def experiment_iterative_tv(cfg: ExperimentConfig, sino=None) -> IterativeResult:
    """Sparse-view TV-regularized reconstruction of the Shepp-Logan phantom.

    Without ``sino``, simulates one from the phantom and adds relative Gaussian
    noise with the configured seed.
    """
    geo = cfg.make_geometry()
    phantom = make_phantom(cfg.phantom, geo.volume)
    if sino is None:
        sino = add_gaussian_noise(forward_project(phantom, geo), cfg.noise, cfg.seed)
    x, loss_log = iterative_tv_reconstruct(sino, geo, cfg.tv_weight, cfg.learning_rate, cfg.iterations)
    fbp = fbp_reconstruct(sino, geo, "ramlak")
    row = geo.volume.shape[0] // 2
    _write_outputs(
        cfg,
        {"phantom": (phantom, geo.volume.spacing), "iterative": (x, geo.volume.spacing),
         "fbp": (fbp, geo.volume.spacing)},
        loss_log=loss_log,
        profiles={
            "profile_phantom": io.line_profile(phantom, 1, row, geo.volume),
            "profile_iterative": io.line_profile(x, 1, row, geo.volume),
            "profile_fbp": io.line_profile(fbp, 1, row, geo.volume),
        },
    )
    return IterativeResult(x, phantom, np.asarray(sino), fbp, loss_log)


def default_fdk_geometry(n_projections: int = 248, angular_range_deg: float = 200.0) -> Geometry3DCone:
    """Desk-scale analog of the clinical short scan: 64^3 volume, 96^2 detector."""
    return Geometry3DCone(
        VolumeSpec((64, 64, 64), (1.0, 1.0, 1.0)),
        DetectorSpec((96, 96), (1.2, 1.2)),
        n_projections,
        math.radians(angular_range_deg),
        sid=750.0,
        sdd=1200.0,
    )
