r"""Poisson loop soup in a box.

The soup is a Poisson point process whose intensity puts mass
:math:`w_j = e^{\beta\mu j} p_{\beta j}(0)/j` on loops of winding ``j``
based at each site. Sampling draws the total number of loops, then iid
windings from ``w / sum(w)`` and uniform bases, which has the same law as
independent Poisson counts per ``(site, winding)`` cell.

At :math:`\mu = 0` the winding sum is cut at ``j_max``; the density carried
by the discarded loops, :math:`\beta\sum_{j>j_\max} p_{\beta j}(0)`, is
reported with every sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import thermo
from .kernels import ModelParams
from .lattice import SiteLookup, box as box_sites
from .paths import LoopBatch

DENSITY_J_MAX = 10_000


@dataclass(frozen=True)
class LatticeBox:
    """The box ``[-side/2, side/2)^d + offset`` with free or Dirichlet boundary."""

    side: int
    d: int
    boundary: str = "free"
    offset: tuple = ()

    def __post_init__(self):
        if self.side < 1:
            raise ValueError("side must be positive")
        if self.boundary not in ("free", "dirichlet"):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if not self.offset:
            object.__setattr__(self, "offset", (0,) * self.d)
        if len(self.offset) != self.d:
            raise ValueError("offset has the wrong dimension")

    @property
    def volume(self) -> int:
        return self.side ** self.d

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.offset, dtype=np.int64) - self.side // 2

    def sites(self) -> np.ndarray:
        return box_sites(self.side, self.d, self.offset)

    def contains(self, y) -> np.ndarray:
        rel = np.atleast_2d(np.asarray(y, dtype=np.int64)) - self.lo
        return np.all((rel >= 0) & (rel < self.side), axis=1)

    def translated(self, shift) -> "LatticeBox":
        off = tuple(int(a + b) for a, b in zip(self.offset, np.asarray(shift, dtype=np.int64)))
        return LatticeBox(self.side, self.d, self.boundary, off)

    def site_index(self, y) -> np.ndarray:
        """Lexicographic index of sites inside the box (undefined outside)."""
        rel = np.atleast_2d(np.asarray(y, dtype=np.int64)) - self.lo
        return np.ravel_multi_index(tuple(rel.T), (self.side,) * self.d)


@lru_cache(maxsize=64)
def _weights(d: int, beta: float, mu: float, j_max: int) -> np.ndarray:
    j = np.arange(1, j_max + 1, dtype=float)
    w = np.exp(beta * mu * j) * thermo.return_table(ModelParams(d, beta), j_max) / j
    w.setflags(write=False)
    return w


def loop_weights(params: ModelParams, j_max: int) -> np.ndarray:
    """Per-site intensity ``w_j`` of winding-``j`` loops, ``j = 1..j_max``."""
    return _weights(params.d, float(params.beta), float(params.mu), int(j_max))


def default_j_max(params: ModelParams, tol: float = 1e-14) -> int:
    """Cutoff: beyond it the density tail is below ``tol`` (``mu < 0``) or
    :data:`DENSITY_J_MAX` at ``mu = 0``."""
    if params.mu == 0:
        return DENSITY_J_MAX
    q = math.exp(params.beta * params.mu)
    return max(1, int(math.ceil(math.log(tol * (1 - q)) / math.log(q))))


def density_tail(params: ModelParams, j_max: int) -> float:
    r"""Density of the loops dropped by the cutoff, :math:`\beta\sum_{j>j_\max} e^{\beta\mu j}p_{\beta j}(0)`.

    Exact (up to the expansion error) at ``mu = 0``, an upper bound otherwise.
    """
    beta = params.beta
    if params.mu == 0:
        params.require_transient("the untruncated soup density")
        total, err = thermo._expansion_tail(params, j_max + 1)
        return float(beta * (total + err))
    q = math.exp(beta * params.mu)
    p_next = thermo.return_table(params, j_max + 1)[-1]
    return float(beta * p_next * q ** (j_max + 1) / (1 - q))


def _check_params(params: ModelParams, j_max: int | None) -> int:
    if params.mu > 0:
        raise ValueError("mu must be <= 0")
    if j_max is None:
        if params.mu == 0:
            raise ValueError("mu = 0 needs an explicit winding cutoff j_max")
        j_max = default_j_max(params)
    if j_max < 1:
        raise ValueError("j_max must be positive")
    return int(j_max)


@dataclass
class SoupSample:
    """One realisation of the soup; ``tail_density`` is the density of loops
    not represented because of the cutoff."""

    box: LatticeBox
    params: ModelParams
    loops: LoopBatch
    j_max: int
    tail_density: float

    def __len__(self) -> int:
        return len(self.loops)


@dataclass
class OccupationField:
    """Total local time per site, stored sparsely."""

    sites: np.ndarray
    values: np.ndarray
    normalizer: int

    def __getitem__(self, x) -> float:
        hit = np.all(self.sites == np.asarray(x), axis=1)
        return float(self.values[hit].sum())

    @property
    def mean(self) -> float:
        return float(self.values.sum() / self.normalizer)

    def as_dict(self) -> dict:
        return {tuple(int(c) for c in s): float(v) for s, v in zip(self.sites, self.values)}


def _draw_windings(params: ModelParams, volume: int, j_max: int, rng: np.random.Generator) -> np.ndarray:
    w = loop_weights(params, j_max)
    cdf = np.cumsum(w)
    n = rng.poisson(volume * cdf[-1])
    return 1 + np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right").clip(max=j_max - 1)


def sample_soup(box: LatticeBox, params: ModelParams, rng: np.random.Generator,
                j_max: int | None = None) -> SoupSample:
    """Sample the loop soup rooted in ``box``.

    Free boundary loops may leave the box. Under the Dirichlet boundary the
    loops that leave are discarded, an exact Poisson thinning to the killed
    bridge measure.
    """
    if box.d != params.d:
        raise ValueError("box and params disagree on the dimension")
    j_max = _check_params(params, j_max)
    windings = _draw_windings(params, box.volume, j_max, rng)
    return soup_from_windings(box, params, windings, rng, j_max)


def loops_inside(loops: LoopBatch, box: LatticeBox) -> np.ndarray:
    """Mask of loops that never leave ``box``."""
    owner, sites, _, _ = loops.holding()
    outside = ~box.contains(sites)
    bad = np.zeros(len(loops), dtype=bool)
    bad[owner[outside]] = True
    return ~bad


def occupation_field(sample: SoupSample) -> OccupationField:
    """Local times of all loops summed per site (sites outside the box included)."""
    d = sample.params.d
    if len(sample.loops) == 0:
        return OccupationField(np.zeros((0, d), np.int64), np.zeros(0), sample.box.volume)
    _, sites, _, dt = sample.loops.holding()
    uniq, inv = np.unique(sites, axis=0, return_inverse=True)
    return OccupationField(uniq, np.bincount(inv.ravel(), weights=dt), sample.box.volume)


def mean_density(sample: SoupSample) -> float:
    r""":math:`\bar{\mathcal L} = \sum_x \mathcal L_x / |\Lambda|`, i.e. total loop time per site."""
    return float(sample.loops.durations.sum() / sample.box.volume)


@dataclass
class WindingBatch:
    """Windings of ``n`` independent soups: dense Poisson counts for small
    windings plus a sparse list of long ones."""

    dense: np.ndarray
    tail_owner: np.ndarray
    tail_winding: np.ndarray
    beta: float
    volume: int

    def __len__(self) -> int:
        return len(self.dense)

    def densities(self) -> np.ndarray:
        j = np.arange(1, self.dense.shape[1] + 1)
        total = self.dense @ j + np.bincount(self.tail_owner, weights=self.tail_winding,
                                             minlength=len(self.dense))
        return self.beta * total / self.volume

    def windings(self, i: int) -> np.ndarray:
        J = self.dense.shape[1]
        dense = np.repeat(np.arange(1, J + 1), self.dense[i])
        return np.concatenate([dense, self.tail_winding[self.tail_owner == i]]).astype(np.int64)

    def max_winding(self) -> np.ndarray:
        J = self.dense.shape[1]
        present = self.dense > 0
        out = np.where(present.any(axis=1), J - np.argmax(present[:, ::-1], axis=1), 0)
        if len(self.tail_owner):
            np.maximum.at(out, self.tail_owner, self.tail_winding)
        return out


class WindingSampler:
    r"""Replicas of the winding content of a soup in a box of ``volume`` sites.

    Winding counts :math:`n_j \sim \mathrm{Poisson}(|\Lambda| w_j)` are drawn as a
    matrix for ``j <= dense_j``; longer loops as a Poisson total with iid
    windings from the normalised remaining weights.
    """

    def __init__(self, params: ModelParams, volume: int, j_max: int | None = None,
                 dense_j: int = 256, j_min: int = 1):
        self.params = params
        self.volume = int(volume)
        self.j_max = _check_params(params, j_max)
        w = loop_weights(params, self.j_max).copy()
        w[:j_min - 1] = 0.0
        self.J = min(dense_j, self.j_max)
        self.dense_mean = self.volume * w[:self.J]
        self.tail_cdf = np.cumsum(w[self.J:])
        self.tail_mean = self.volume * (self.tail_cdf[-1] if len(self.tail_cdf) else 0.0)

    def batch(self, n: int, rng: np.random.Generator) -> WindingBatch:
        dense = rng.poisson(self.dense_mean, size=(n, self.J))
        if self.tail_mean > 0:
            counts = rng.poisson(self.tail_mean, size=n)
            u = rng.random(counts.sum()) * self.tail_cdf[-1]
            draws = self.J + 1 + np.searchsorted(self.tail_cdf, u, side="right").clip(
                max=len(self.tail_cdf) - 1)
            owner = np.repeat(np.arange(n), counts)
        else:
            draws = np.zeros(0, np.int64)
            owner = np.zeros(0, np.int64)
        return WindingBatch(dense, owner, draws.astype(np.int64), self.params.beta, self.volume)

    def densities(self, n: int, rng: np.random.Generator, chunk: int | None = None) -> np.ndarray:
        chunk = chunk or max(1, 2_000_000 // self.J)
        return np.concatenate([self.batch(min(chunk, n - s), rng).densities()
                               for s in range(0, n, chunk)]) if n else np.zeros(0)


def sample_mean_densities(params: ModelParams, volume: int, n_reps: int, rng: np.random.Generator,
                          j_max: int | None = None, dense_j: int = 256) -> np.ndarray:
    r"""Replicas of :math:`\bar{\mathcal L}` without building the loops: only the
    windings matter, :math:`\bar{\mathcal L} = \beta\sum_j j\,n_j/|\Lambda|`."""
    return WindingSampler(params, volume, j_max, dense_j).densities(n_reps, rng)


def soup_from_windings(box: LatticeBox, params: ModelParams, windings, rng: np.random.Generator,
                       j_max: int) -> SoupSample:
    """Complete given windings into a soup sample: uniform bases and bridges."""
    windings = np.asarray(windings, dtype=np.int64)
    bases = box.lo + rng.integers(0, box.side, size=(len(windings), box.d))
    loops = LoopBatch.sample(params, bases, windings, rng)
    if box.boundary == "dirichlet" and len(loops):
        loops = loops.select(loops_inside(loops, box))
    return SoupSample(box, params, loops, j_max, density_tail(params, j_max))


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    n: int

    def __iter__(self):
        return iter((self.value, self.stderr))


def exceedance_probability(box: LatticeBox, params: ModelParams, rho_target: float, n_reps: int,
                           rng: np.random.Generator, j_max: int | None = None) -> Estimate:
    r"""Monte Carlo estimate of :math:`P(\bar{\mathcal L} > \rho)` with its binomial standard error.

    At ``mu = 0`` the default cutoff is 64 times the winding that alone
    exceeds the target, so the single long loop driving the event is well
    represented.
    """
    if rho_target < 0:
        raise ValueError("rho_target must be nonnegative")
    if j_max is None and params.mu == 0:
        j_max = 64 * thermo.long_loop_threshold(params, box.volume, max(rho_target, 1e-9))
    x = sample_mean_densities(params, box.volume, n_reps, rng, j_max)
    p = float(np.mean(x > rho_target))
    return Estimate(p, math.sqrt(max(p * (1 - p), 0.0) / n_reps), n_reps)


def box_counts(sample: SoupSample, sub_side: int, winding: int | None = None) -> np.ndarray:
    """Number of loops based in each sub-box of side ``sub_side`` tiling the box,
    optionally restricted to one winding."""
    box = sample.box
    if box.side % sub_side:
        raise ValueError("sub-boxes must tile the box")
    keep = np.ones(len(sample.loops), bool) if winding is None else sample.loops.windings == winding
    rel = (sample.loops.bases[keep] - box.lo) // sub_side
    m = box.side // sub_side
    flat = np.ravel_multi_index(tuple(rel.T), (m,) * box.d)
    return np.bincount(flat, minlength=m ** box.d)


def expected_loop_count(params: ModelParams, j_max: int) -> float:
    """Mean number of loops per site with winding at most ``j_max``."""
    return float(loop_weights(params, j_max).sum())
