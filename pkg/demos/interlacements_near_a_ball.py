"""Interlacement trajectories seen from a small ball.

The number of trajectories meeting the ball is Poisson with mean
u times its capacity, and the probability that none meets it is
exp(-u capacity).
"""

import numpy as np

from loopsoup import ModelParams, equilibrium_solve, sample_interlacements
from loopsoup.lattice import ball

p = ModelParams(3)
K = ball(1, 3)
eq = equilibrium_solve(K, p)
print(f"capacity of the radius-1 ball: {eq.capacity:.5f} (solver error {eq.error:.1e})")
rng = np.random.default_rng(3)
for u in (0.25, 0.5, 1.0):
    counts = np.array([len(sample_interlacements(K, u, p, rng, eq=eq, horizons=(1.0, 1.0)))
                       for _ in range(4000)])
    print(f"u={u}: mean count {counts.mean():.3f} vs {u * eq.capacity:.3f}, "
          f"P(no hit) {np.mean(counts == 0):.4f} vs {np.exp(-u * eq.capacity):.4f}")
