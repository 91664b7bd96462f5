"""Mean occupation of the soup against the thermodynamic density.

Below criticality the box average of the occupation field concentrates on
the density series; at zero chemical potential it saturates at the critical
density, which is the point where conditioning on more mass forces long
loops into existence.
"""

import numpy as np

from loopsoup import LatticeBox, ModelParams, mean_density, rho, sample_soup
from loopsoup.thermo import critical_density

rng = np.random.default_rng(1)
box = LatticeBox(10, 3)
print(f"critical density at beta=1: {critical_density(ModelParams(3)):.6f}")
for mu in (-1.0, -0.5, -0.2, -0.05, 0.0):
    p = ModelParams(3, 1.0, mu)
    # at mu = 0 the winding sum needs a cutoff; the missing density is reported and added back
    samples = [sample_soup(box, p, rng, j_max=10_000 if mu == 0 else None) for _ in range(500)]
    draws = np.array([mean_density(s) + s.tail_density for s in samples])
    se = draws.std(ddof=1) / np.sqrt(len(draws))
    print(f"mu={mu:+.2f}  simulated {draws.mean():.4f} +- {se:.4f}   series {rho(p):.4f}")
