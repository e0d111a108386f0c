"""Lifetime versus bias field at three trap powers and the B_opt(P) line."""

import argparse

import numpy as np

from metatweezer.dynamics import GAUSS_PER_TESLA, BiasLifetimeModel, simulate_bias_sweep
from metatweezer.tweezer import FictitiousFieldModel, fictitious_field, optimal_bias_linear_fit

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--cycles", type=int, default=400)
ap.add_argument("--threads", type=int, default=1)
ap.add_argument("--seed", type=int, default=0)
args = ap.parse_args()

presets = {14.0e-3: 0.52, 16.3e-3: 0.59, 18.6e-3: 0.66}
offsets = np.arange(-0.12, 0.1201, 0.02)
rows = []
for i, (p, b0) in enumerate(presets.items()):
    model = BiasLifetimeModel(1.0, 0.1, b0 / GAUSS_PER_TESLA, 0.04 / GAUSS_PER_TESLA)
    sw = simulate_bias_sweep(model, (b0 + offsets) / GAUSS_PER_TESLA, cycles=args.cycles,
                             seed=args.seed, threads=args.threads, index_offset=100 * i)
    rows.append([p, sw.b_opt])
    print(f"P = {p * 1e3:.1f} mW: B_opt {sw.b_opt * GAUSS_PER_TESLA:.4f} G "
          f"(+- {sw.fit.error('b_opt') * GAUSS_PER_TESLA:.4f}, true {b0})")
line = optimal_bias_linear_fit(rows)
print(f"B_opt(P) = {line.slope * GAUSS_PER_TESLA * 1e-3:.4f} G/mW * P + "
      f"{line.intercept * GAUSS_PER_TESLA:.4f} G")
ff = FictitiousFieldModel.from_linear_fit(line, waist=1.33e-6)
bf, grad = fictitious_field(16.3e-3, ff)
print(f"fictitious field at 16.3 mW: {bf * GAUSS_PER_TESLA:.3f} G, B_F/w0 {grad * GAUSS_PER_TESLA / 1e6:.3f} G/um")
