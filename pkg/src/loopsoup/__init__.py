"""Bosonic loop soups on Z^d, their density-conditioned ensembles and random interlacements."""

from .kernels import (DimensionError, ModelParams, green_function, return_probability,
                      transition_kernel)
from .thermo import (NoSolutionError, M_mass, critical_density, invert_density, rate_function, rho,
                     tail_mass, thermo_report)
from .paths import (Loop, LoopBatch, PathSkeleton, TrajectoryWindow, canonical_rep, d_K,
                    interaction_energy, local_time, particle_map, sample_bridge, sample_loop, shift)
from .soup import (LatticeBox, OccupationField, SoupSample, exceedance_probability, mean_density,
                   occupation_field, sample_soup)
from .conditioned import (ConditionedConfig, big_loop_sample, decomposed_conditioned_sample,
                          long_loops_hitting, rejection_conditioned_sample, tilting_check)
from .interlacements import (EquilibriumData, InterlacementSample, equilibrium_mc, equilibrium_solve,
                             hitting_asymptotics_check, long_loop_vs_interlacement,
                             sample_interlacements)
from .harness import ExperimentConfig, ResultRecord, run

__version__ = "0.1.0"
