"""Sparse-view reconstruction by gradient descent on |Ax - p|^2 + lambda TV(x).

The image is the weight of an additive layer in front of the forward
projector; its gradient is the back projection of the residual.

Run: python demos/05_iterative_tv.py [output_dir]
"""

import sys
from pathlib import Path

from diffrecon import io
from diffrecon.pipelines import ExperimentConfig, experiment_iterative_tv, rmse

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output/iterative_tv")

cfg = ExperimentConfig.default("iterative_tv")
cfg.output_dir = str(out)
print(f"{cfg.geometry['n_projections']} views, {100 * cfg.noise:.0f}% noise, lambda {cfg.tv_weight}, "
      f"lr {cfg.learning_rate}, {cfg.iterations} iterations")
res = experiment_iterative_tv(cfg)
print(f"RMSE: FBP {rmse(res.fbp, res.phantom):.4f}, TV {rmse(res.reconstruction, res.phantom):.4f}")
print(f"loss {res.loss_log[0][1]:.4g} -> {res.loss_log[-1][1]:.4g}")
io.export_pgm(res.reconstruction, (0.0, 0.4), out / "iterative.pgm")
io.export_pgm(res.fbp, (0.0, 0.4), out / "fbp.pgm")
print(f"outputs in {out}")
