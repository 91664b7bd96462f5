"""Where the excess mass goes.

Conditioning a box on a density above the critical one is realised by a
single macroscopic loop; the remaining loops look like the plain soup. The
script compares the exact conditioned soup (by rejection) with its
decomposition into a short-loop soup plus one long loop.
"""

import numpy as np

from loopsoup import ConditionedConfig, LatticeBox, ModelParams, decomposed_conditioned_sample
from loopsoup import rejection_conditioned_sample
from loopsoup.thermo import critical_density

p = ModelParams(3, 1.0, 0.0)
rng = np.random.default_rng(2)
side, excess = 6, 1.0
target = critical_density(p) + excess
volume = side ** 3

longest = []
for _ in range(200):
    res = rejection_conditioned_sample(LatticeBox(side, 3), p, target, rng)
    longest.append(res.sample.loops.windings.max())
print(f"exact conditioned soup: median longest winding {np.median(longest):.0f} "
      f"(excess mass x volume = {excess * volume:.0f})")

cfg = ConditionedConfig(side, excess, 3, grid_side=1)
long_windings = [decomposed_conditioned_sample(cfg, p, rng, with_soup=False).long_loops.windings[0]
                 for _ in range(200)]
print(f"decomposition: median long winding {np.median(long_windings):.0f}")
