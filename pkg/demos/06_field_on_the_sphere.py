#!/usr/bin/env python3
"""End to end: a periodically correlated field on the sphere.

Each harmonic channel is an independent stationary vector sequence; the
field is rebuilt by reconstructing every channel over its periods and
summing the harmonics.  Conjugate pairing of the +/- frequency components
makes the synthesized samples real, and the whole pipeline inverts back to
the channel coefficients.
"""

import numpy as np

from pcfield import (
    BlockingConfig,
    RationalDensity,
    block_coefficients,
    decompose_field,
    gauss_legendre_grid,
    simulate_channel,
    synthesize_sphere_field,
)
from pcfield.harmonics import flat_index
from pcfield.simulate import _pair_conjugate

cfg = BlockingConfig(period=1.0, n_components=3, dt=1.0 / 12)
m_max = 2
grid = gauss_legendre_grid(m_max)
n_periods = 6

# one density per degree: lower degrees carry more power (isotropic decay)
paths = {}
for m in range(m_max + 1):
    density = RationalDensity(np.eye(3)[None] / (1 + m) ** 2, [1.0, -0.4])
    for l in range(1, 2 * m + 2):
        seed = 100 * m + l
        paths[(m, l)] = simulate_channel(density, n_periods, seed=seed)

field = synthesize_sphere_field(paths, cfg, grid, m_max)
print(f"synthesized field: {field.shape[0]} time samples x "
      f"{field.shape[1]} sphere nodes, real = {np.isrealobj(field)}")
print(f"sample values at the first node: {np.round(field[:4, 0], 4)}")

# invert: decompose each time sample, then block each channel series
coeff_series = np.array([decompose_field(field[t], m_max, grid)
                         for t in range(field.shape[0])])
worst = 0.0
for (m, l), v in paths.items():
    rebuilt = block_coefficients(coeff_series[:, flat_index(m, l)], cfg)
    paired = _pair_conjugate(v.copy(), cfg)
    worst = max(worst, float(np.max(np.abs(rebuilt.values - paired))))
print(f"field -> harmonics -> blocking recovers the (conjugate-paired) "
      f"channel paths to {worst:.2e}")

# empirical periodic correlation: same time offsets one period apart agree
n_trials = 2000
t1, s1 = 2, 7
S = cfg.samples_per_period
vals_0, vals_T = [], []
density = RationalDensity(np.eye(3)[None], [1.0, -0.4])
for trial in range(n_trials):
    p = simulate_channel(density, 3, seed=5000 + trial)
    p = _pair_conjugate(p, cfg)
    series = synthesize_sphere_field({(1, 2): p}, cfg, grid, m_max)[:, 0]
    vals_0.append(series[t1] * series[s1])
    vals_T.append(series[t1 + S] * series[s1 + S])
diff = np.mean(vals_0) - np.mean(vals_T)
sigma = np.std(np.array(vals_0) - np.array(vals_T)) / np.sqrt(n_trials)
print(f"covariance at (t, s) vs (t+T, s+T): difference {diff:+.4f} "
      f"within 3 sigma = {3 * sigma:.4f} (periodic correlation)")
