"""Forward and back projection of a disk, and how far the pair is from a true transpose.

Run: python demos/01_projectors.py [output_dir]
"""

import math
import sys
from pathlib import Path

import numpy as np

from diffrecon import io
from diffrecon.geometry import DetectorSpec, Geometry2DFan, Geometry2DParallel, VolumeSpec
from diffrecon.phantom import circle, rasterize_primitives
from diffrecon.projector import backproject, forward_project

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output/projectors")
out.mkdir(parents=True, exist_ok=True)

vol = VolumeSpec((128, 128), 1.0)
disk = rasterize_primitives([circle((0.0, 0.0), 40.0)], vol)

# A parallel scan over half a turn and a fan scan over a full turn of the same object.
par = Geometry2DParallel(vol, DetectorSpec((183,), (1.0,)), 180, math.pi)
fan = Geometry2DFan(vol, DetectorSpec((256,), (1.0,)), 360, 2 * math.pi, sid=300.0, sdd=600.0)

for name, geo in [("parallel", par), ("fan", fan)]:
    sino = forward_project(disk, geo)
    io.write_image(out / f"sinogram_{name}.json", io.Image(sino.astype(np.float32)))
    io.export_pgm(sino, (0.0, sino.max()), out / f"sinogram_{name}.pgm")
    print(f"{name}: sinogram {sino.shape}, peak {sino.max():.2f} mm (disk diameter 80 mm)")

# Every parallel ray through the disk sees a chord of length 2 sqrt(r^2 - d^2).
d = par.detector.coordinates()
sino = forward_project(disk, par)
inside = np.abs(d) < 39
err = np.abs(sino[0, inside] - 2 * np.sqrt(40.0**2 - d[inside] ** 2))
print(f"chord error at view 0: median {np.median(err):.3f} mm, max {err.max():.3f} mm")

# The back projector is voxel driven, so <Ax, y> and <x, By> only agree approximately.
rng = np.random.default_rng(0)
x, y = rng.random(vol.shape), rng.random(par.sinogram_shape)
lhs, rhs = np.vdot(forward_project(x, par), y), np.vdot(x, backproject(y, par))
print(f"<Ax, y> = {lhs:.6g}, <x, By> = {rhs:.6g}, relative gap {abs(lhs - rhs) / abs(lhs):.2e}")

bp = backproject(sino, par) * math.pi / par.n_projections
io.export_pgm(bp, (0.0, bp.max()), out / "unfiltered_backprojection.pgm")
print(f"unfiltered back projection is blurred: center {bp[64, 64]:.1f}, edge {bp[64, 104]:.1f}")
print(f"outputs in {out}")
