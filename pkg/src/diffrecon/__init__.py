"""Differentiable CT toolkit: projectors, filters and weights as nodes of a small
reverse-mode graph, plus the reconstruction pipelines built from them."""

from .filtering import Filter1D, apply_filter, make_filter, parker_weights, ramlak_filter, ramp_filter
from .geometry import (
    DetectorSpec,
    Geometry2DFan,
    Geometry2DParallel,
    Geometry3DCone,
    VolumeSpec,
    geometry_from_dict,
    load_geometry,
)
from .graph import DivergenceError, Graph, train
from .io import Image, read_image, write_image
from .phantom import shepp_logan_2d, shepp_logan_3d
from .pipelines import ExperimentConfig, fbp_reconstruct, fdk_reconstruct
from .projector import backproject, forward_project

__version__ = "0.1.0"

__all__ = [
    "DetectorSpec",
    "DivergenceError",
    "ExperimentConfig",
    "Filter1D",
    "Geometry2DFan",
    "Geometry2DParallel",
    "Geometry3DCone",
    "Graph",
    "Image",
    "VolumeSpec",
    "apply_filter",
    "backproject",
    "fbp_reconstruct",
    "fdk_reconstruct",
    "forward_project",
    "geometry_from_dict",
    "load_geometry",
    "make_filter",
    "parker_weights",
    "ramlak_filter",
    "ramp_filter",
    "read_image",
    "shepp_logan_2d",
    "shepp_logan_3d",
    "train",
    "write_image",
]
