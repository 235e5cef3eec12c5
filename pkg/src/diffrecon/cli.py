"""Command-line entry point.

Exit codes: 0 on success, 1 on usage errors, 2 on data errors (bad files,
inconsistent shapes, invalid scan ranges).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .geometry import (
    Geometry2DParallel,
    Geometry3DCone,
    VolumeSpec,
    geometry_to_dict,
    load_geometry,
)
from .pipelines import (
    ExperimentConfig,
    add_gaussian_noise,
    experiment_learn_filter,
    fbp_reconstruct,
    fdk_reconstruct,
    iterative_tv_reconstruct,
    make_phantom,
    rmse,
    stable_learning_rate,
)
from .projector import forward_project


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _geometry(args):
    return load_geometry(args.geometry)


def _read(path) -> io.Image:
    return io.read_image(path)


def _write(path, data, spacing) -> None:
    io.write_image(path, io.Image(np.asarray(data, dtype=np.float32), spacing))
    print(f"wrote {io._header_path(path)}")


def _sino_spacing(geo) -> tuple[float, ...]:
    return (geo.angular_range / geo.n_projections, *geo.detector.spacing)


def _report(args, rec) -> None:
    if args.reference:
        ref = _read(args.reference).data
        if ref.shape != rec.shape:
            raise ValueError(f"reference shape {ref.shape} differs from reconstruction {rec.shape}")
        print(f"rmse={rmse(rec, ref):.6g}")


def cmd_phantom(args) -> None:
    if args.geometry:
        volume = load_geometry(args.geometry).volume
    else:
        ndim = 3 if args.type.endswith("3d") else args.dims
        volume = VolumeSpec((args.size,) * ndim, (args.spacing,) * ndim)
    if args.type.endswith("3d") and volume.ndim != 3 or args.type.endswith("2d") and volume.ndim != 2:
        raise ValueError(f"phantom type {args.type} does not fit a {volume.ndim}D volume")
    _write(args.out, make_phantom(args.type, volume), volume.spacing)


def cmd_trajectory(args) -> None:
    geo = _geometry(args)
    d = geometry_to_dict(geo, include_matrices=isinstance(geo, Geometry3DCone))
    if not isinstance(geo, Geometry3DCone):
        d["ray_vectors"] = geo.ray_vectors.tolist()
    Path(args.out).write_text(json.dumps(d, indent=2) + "\n")
    print(f"wrote {args.out}")


def cmd_project(args) -> None:
    geo = _geometry(args)
    vol = _read(args.input).data.astype(float)
    sino = forward_project(vol, geo)
    if args.noise:
        sino = add_gaussian_noise(sino, args.noise, args.seed)
    _write(args.out, sino, _sino_spacing(geo))


def cmd_reconstruct(args) -> None:
    geo = _geometry(args)
    sino = _read(args.input).data.astype(float)
    if args.method == "fbp":
        if type(geo) is not Geometry2DParallel:
            raise ValueError("fbp needs a parallel2d geometry")
        rec = fbp_reconstruct(sino, geo, args.filter)
    elif args.method == "fdk":
        if not isinstance(geo, Geometry3DCone):
            raise ValueError("fdk needs a cone3d geometry")
        rec = fdk_reconstruct(sino, geo, None if args.no_parker else "parker", args.filter)
    else:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.default("iterative_tv")
        lam = cfg.tv_weight if args.tv_weight is None else args.tv_weight
        if args.learning_rate is not None:
            lr = args.learning_rate
        elif args.config:
            lr = cfg.learning_rate
        else:
            # the shipped step size is tuned for the shipped geometry only
            lr = stable_learning_rate(geo)
        its = cfg.iterations if args.iterations is None else args.iterations
        rec, loss_log = iterative_tv_reconstruct(sino, geo, lam, lr, its)
        if args.loss_csv:
            io.write_loss_csv(args.loss_csv, loss_log)
    _write(args.out, rec, geo.volume.spacing)
    _report(args, rec)


def cmd_learn_filter(args) -> None:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.default("learn_filter")
    if args.seed is not None:
        cfg.seed = args.seed
    if args.iterations is not None:
        cfg.iterations = args.iterations
    cfg.output_dir = args.out
    result = experiment_learn_filter(cfg)
    print(f"loss {result.loss_log[0][1]:.6g} -> {result.loss_log[-1][1]:.6g}")
    print(f"distance_ratio={result.distance_ratio:.6g}")
    print(f"wrote {args.out}")


def cmd_profile(args) -> None:
    image = _read(args.input)
    index = None if args.index is None else (args.index[0] if len(args.index) == 1 else tuple(args.index))
    rows = io.line_profile(image, args.axis, index)
    io.write_profile_csv(args.out, rows)
    print(f"wrote {args.out}")


def cmd_export_pgm(args) -> None:
    io.export_pgm(_read(args.input), tuple(args.window), args.out)
    print(f"wrote {args.out}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="diffrecon", description="Differentiable CT toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("phantom", help="voxelize a numerical phantom")
    p.add_argument("--type", default="shepp-logan-2d",
                   choices=["shepp-logan", "shepp-logan-2d", "shepp-logan-3d", "disk"])
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--spacing", type=float, default=1.0)
    p.add_argument("--dims", type=int, choices=[2, 3], default=2, help="dimension for 'disk'")
    p.add_argument("--geometry", help="take the volume grid from this geometry JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("trajectory", help="write ray vectors or projection matrices")
    p.add_argument("--geometry", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_trajectory)

    p = sub.add_parser("project", help="forward project a volume")
    p.add_argument("--geometry", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--noise", type=float, default=0.0, help="relative Gaussian noise std")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("reconstruct", help="reconstruct a sinogram")
    p.add_argument("method", choices=["fbp", "fdk", "iterative"])
    p.add_argument("--geometry", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--filter", default="ramlak", choices=["ramlak", "ram-lak", "ramp"])
    p.add_argument("--no-parker", action="store_true", help="fdk without redundancy weights")
    p.add_argument("--config", help="iterative: experiment JSON with learning_rate, iterations, tv_weight; "
                   "without it the step size is estimated from the geometry")
    p.add_argument("--tv-weight", type=float)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--iterations", type=int)
    p.add_argument("--loss-csv", help="iterative: write the loss log here")
    p.add_argument("--reference", help="image to report the RMSE against")
    p.add_argument("--seed", type=int, default=0, help="accepted for symmetry; reconstruction is deterministic")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("learn-filter", help="run the filter-learning experiment")
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--iterations", type=int)
    p.set_defaults(func=cmd_learn_filter)

    p = sub.add_parser("profile", help="write a line profile CSV")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--axis", type=int, default=-1)
    p.add_argument("--index", type=int, nargs="+", help="fixed indices of the other axes")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("export-pgm", help="export a windowed 8-bit PGM")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--window", type=float, nargs=2, default=[0.0, 1.0], metavar=("LO", "HI"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_pgm)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    try:
        args.func(args)
    except (ValueError, TypeError, IndexError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
