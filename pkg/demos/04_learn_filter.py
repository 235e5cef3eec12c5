"""Learning the reconstruction filter of a parallel-beam FBP network.

The network is back projection of the Fourier-filtered sinogram; the
filter bins are the only trainable weights and start as the ramp. Training
fixes the DC bin, which is where the ramp and the Ram-Lak filter differ most
in effect. The bins near the detector Nyquist frequency carry no signal
through the interpolating projectors and stay where they started.

Run: python demos/04_learn_filter.py [output_dir]
"""

import sys
from pathlib import Path

import numpy as np

from diffrecon.pipelines import ExperimentConfig, experiment_learn_filter

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output/learn_filter")

cfg = ExperimentConfig.default("learn_filter")
cfg.output_dir = str(out)
res = experiment_learn_filter(cfg)

first, last = res.loss_log[0][1], res.loss_log[-1][1]
print(f"loss {first:.4g} -> {last:.4g} ({100 * last / first:.1f}% of the start)")
print(f"distance to Ram-Lak relative to the ramp's: {res.distance_ratio:.3f}")
n = res.learned.n_bins
for k in (0, 1, 2, n // 4, n // 2):
    print(f"bin {k:3d}: ramp {res.ramp.weights[k]:.5f}  learned {res.learned.weights[k]:.5f}  "
          f"Ram-Lak {res.ramlak.weights[k]:.5f}")
low = np.minimum(np.arange(n), n - np.arange(n)) < n // 4
d = res.learned.weights - res.ramlak.weights
d0 = res.ramp.weights - res.ramlak.weights
print(f"low half of the band: distance ratio {np.linalg.norm(d[low]) / np.linalg.norm(d0[low]):.3f}; "
      f"high half: {np.linalg.norm(d[~low]) / np.linalg.norm(d0[~low]):.3f}")
print(f"outputs in {out}")
