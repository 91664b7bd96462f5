r"""The soup at :math:`\mu = 0` conditioned on a density excess.

Two samplers are provided.

* :func:`rejection_conditioned_sample` draws exactly from the soup
  conditioned on :math:`\bar{\mathcal L} > \rho`. Candidates are screened
  in vectorised batches using only their windings; bridges are built for
  the accepted candidate only. An optional tilted proposal at a larger
  chemical potential ``b`` makes rare events reachable: a candidate with
  density ``x`` above the threshold is kept with probability
  :math:`e^{-(b-\mu)|\Lambda|(x-\rho)}`, which is the likelihood ratio
  normalised by its supremum on the event, so the result is exact.
* :func:`decomposed_conditioned_sample` builds the large-box limit
  directly: per box an unconditioned soup of the loops shorter than
  :math:`\rho_\varepsilon|\Lambda|` plus long loops drawn from the tail of
  the loop measure (exactly one per box, or a zero-truncated Poisson
  number in the ``"poissonized"`` mode).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from . import _walks, stats, thermo
from .kernels import ModelParams
from .lattice import SiteLookup, as_sites
from .paths import LoopBatch
from .rng import child_key, subkey, uniform_open
from .soup import LatticeBox, SoupSample, WindingSampler, soup_from_windings


class InfeasibleError(RuntimeError):
    """Rejection sampling ran out of attempts; ``rate`` is the observed acceptance rate."""

    def __init__(self, message: str, attempts: int, rate: float):
        super().__init__(message)
        self.attempts = attempts
        self.rate = rate


@dataclass(frozen=True)
class ConditionedConfig:
    """Two-scale geometry: boxes of side ``N`` tiling a cube of ``grid_side``^d boxes.

    ``grid_side`` defaults to ``round(rho_N * N^(d/2-1))`` with
    ``rho_N = log N``; pass it explicitly for desk-scale runs.
    """

    N: int
    rho_eps: float
    d: int = 3
    grid_side: int | None = None

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("box side must be at least 2")
        if not self.rho_eps > 0:
            raise ValueError("rho_eps must be positive")
        if self.grid_side is None:
            side = max(1, round(math.log(self.N) * self.N ** (self.d / 2 - 1)))
            object.__setattr__(self, "grid_side", int(side))
        if self.grid_side < 1:
            raise ValueError("grid_side must be positive")

    @property
    def volume(self) -> int:
        return self.N ** self.d

    @property
    def threshold(self) -> float:
        """Duration a loop must exceed to count as long."""
        return self.rho_eps * self.volume

    def grid(self) -> np.ndarray:
        """Box indices ``x`` of the grid, centred on the origin box."""
        g = self.grid_side
        r = np.arange(g) - (g - 1) // 2
        mesh = np.meshgrid(*([r] * self.d), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1).astype(np.int64)

    def boxes(self) -> list[LatticeBox]:
        return [LatticeBox(self.N, self.d, "free", tuple(int(c) for c in self.N * x)) for x in self.grid()]

    def central_box_index(self) -> int:
        return int(np.flatnonzero(np.all(self.grid() == 0, axis=1))[0])


# ---------------------------------------------------------------- rejection oracle


@dataclass
class RejectionResult:
    sample: SoupSample
    attempts: int
    density: float


def rejection_conditioned_sample(box: LatticeBox, params: ModelParams, rho: float,
                                 rng: np.random.Generator, j_max: int | None = None,
                                 max_attempts: int = 10**7, proposal_mu: float | None = None,
                                 batch: int = 2048) -> RejectionResult:
    r"""Exact draw from the soup in ``box`` conditioned on :math:`\bar{\mathcal L} > \rho`.

    Parameters
    ----------
    box, params
        Geometry and model; ``params.mu`` is the reference chemical potential.
    rho
        Density threshold (strict inequality).
    j_max
        Winding cutoff; at ``mu = 0`` it defaults to 64 times the winding
        whose loop alone exceeds ``rho``.
    proposal_mu
        Optional tilted chemical potential in ``[mu, 0]`` for the proposal.
    """
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    volume = box.volume
    if j_max is None and params.mu == 0:
        j_max = 64 * thermo.long_loop_threshold(params, volume, max(rho, 1e-9))
    prop = params if proposal_mu is None else params.with_mu(proposal_mu)
    if prop.mu < params.mu:
        raise ValueError("the proposal chemical potential must not be below mu")
    sampler = WindingSampler(prop, volume, j_max)
    tilt = (prop.mu - params.mu) * volume
    attempts = 0
    while attempts < max_attempts:
        n = min(batch, max_attempts - attempts)
        wb = sampler.batch(n, rng)
        x = wb.densities()
        u = rng.random(n)
        ok = x > rho
        if tilt > 0:
            ok &= u < np.exp(-tilt * (x - rho))
        hits = np.flatnonzero(ok)
        if len(hits):
            i = int(hits[0])
            attempts += i + 1
            sample = soup_from_windings(box, params, wb.windings(i), rng, sampler.j_max)
            return RejectionResult(sample, attempts, float(x[i]))
        attempts += n
    raise InfeasibleError(f"no acceptance in {attempts} attempts", attempts, 0.0)


def rejection_conditioned_batch(box: LatticeBox, params: ModelParams, rho: float, n_samples: int,
                                rng: np.random.Generator, j_max: int | None = None,
                                proposal_mu: float | None = None, build_loops: bool = True,
                                batch: int = 4096) -> tuple[list, np.ndarray, int]:
    """Many independent draws of :func:`rejection_conditioned_sample`.

    Every accepted candidate of every batch is kept (they are iid), which is
    much cheaper than restarting per sample. Returns the samples (or ``None``
    entries when ``build_loops`` is false), their densities, and the total
    number of candidates screened.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    volume = box.volume
    if j_max is None and params.mu == 0:
        j_max = 64 * thermo.long_loop_threshold(params, volume, max(rho, 1e-9))
    prop = params if proposal_mu is None else params.with_mu(proposal_mu)
    if prop.mu < params.mu:
        raise ValueError("the proposal chemical potential must not be below mu")
    sampler = WindingSampler(prop, volume, j_max)
    tilt = (prop.mu - params.mu) * volume
    samples, dens = [], []
    screened = 0
    while len(dens) < n_samples:
        wb = sampler.batch(batch, rng)
        x = wb.densities()
        u = rng.random(batch)
        ok = x > rho
        if tilt > 0:
            ok &= u < np.exp(-tilt * (x - rho))
        hits = np.flatnonzero(ok)[:n_samples - len(dens)]
        screened += batch if len(dens) + len(hits) < n_samples else int(hits[-1]) + 1
        for i in hits:
            dens.append(float(x[i]))
            samples.append(soup_from_windings(box, params, wb.windings(i), rng, sampler.j_max)
                           if build_loops else None)
    return samples, np.asarray(dens), screened


# ---------------------------------------------------------------- long loops


def long_winding_weights(params: ModelParams, j_min: int, j_hi: int) -> np.ndarray:
    """Normalised tail weights ``p_{beta j}(0)/j`` for ``j_min <= j <= j_hi`` (at ``mu = 0``)."""
    j = np.arange(j_min, j_hi + 1, dtype=float)
    return thermo.return_table(params, j_hi)[j_min - 1:] / j


@dataclass
class LongWindingLaw:
    r"""Law of the winding of a long loop: :math:`\propto p_{\beta j}(0)/j` on ``j >= j_min``.

    Tabulated up to ``j_hi``; beyond it the leading power law is used,
    which affects the law by a relative ``O(1/j_hi)`` on a set of
    probability ``tail_prob``.
    """

    j_min: int
    j_hi: int
    cdf: np.ndarray
    tail_prob: float
    total_mass: float

    @classmethod
    def build(cls, params: ModelParams, j_min: int, span: int = 64) -> "LongWindingLaw":
        params.require_transient("the long-loop law")
        j_hi = max(j_min * span, j_min + 10_000)
        w = long_winding_weights(params, j_min, j_hi)
        head = w.sum()
        tail, _ = thermo._expansion_tail(params.with_mu(0.0), j_hi + 1, extra_power=1.0)
        total = head + tail
        return cls(j_min, j_hi, np.cumsum(w) / total, tail / total, total)

    def sample(self, n: int, rng: np.random.Generator, d: int) -> np.ndarray:
        u = rng.random(n)
        out = self.j_min + np.searchsorted(self.cdf, u, side="right")
        beyond = u >= self.cdf[-1]
        if beyond.any():
            # P(J > j) ~ (j / j_hi)^{-d/2} above j_hi
            v = rng.random(int(beyond.sum()))
            out[beyond] = np.floor(self.j_hi * v ** (-2.0 / d)).astype(np.int64) + 1
        return out.astype(np.int64)

    def median(self) -> int:
        return int(self.j_min + np.searchsorted(self.cdf, 0.5))


def long_loop_threshold_winding(params: ModelParams, volume: int, rho_eps: float) -> int:
    return thermo.long_loop_threshold(params, volume, rho_eps)


def big_loop_sample(box: LatticeBox, params: ModelParams, rho_eps: float, rng: np.random.Generator,
                    n: int = 1, law: LongWindingLaw | None = None) -> LoopBatch:
    r"""``n`` independent loops from the loop measure restricted to loops based in
    ``box`` with duration above :math:`\rho_\varepsilon|\Lambda|`, normalised."""
    params.require_transient("the long-loop law")
    if law is None:
        law = LongWindingLaw.build(params, thermo.long_loop_threshold(params, box.volume, rho_eps))
    windings = law.sample(n, rng, params.d)
    bases = box.lo + rng.integers(0, box.side, size=(n, box.d))
    return LoopBatch.sample(params, bases, windings, rng)


def zero_truncated_poisson(lam: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Poisson(lam) conditioned to be at least 1, by inversion of ``1 + Poisson`` tails."""
    u = rng.random(size)
    k = np.ones(size, dtype=np.int64)
    # P(K = k) = lam^k / (k! (e^lam - 1))
    p = lam / math.expm1(lam)
    cdf = p
    active = u > cdf
    kk = 1
    while active.any() and kk < 1000:
        kk += 1
        p *= lam / kk
        cdf += p
        k[active] = kk
        active &= u > cdf
    return k


@dataclass
class DecomposedSample:
    """Per-box short-loop soups and the long-loop layer (``long_box[i]`` is the
    grid index of the box in which long loop ``i`` is based)."""

    config: ConditionedConfig
    soups: list
    long_loops: LoopBatch
    long_box: np.ndarray
    long_mass: float = 0.0
    bias_bound: float = 0.0


def decomposed_conditioned_sample(config: ConditionedConfig, params: ModelParams,
                                  rng: np.random.Generator, mode: str = "default",
                                  with_soup: bool = True, conditioning: str = "per_box",
                                  law: LongWindingLaw | None = None) -> DecomposedSample:
    r"""Asymptotic form of the conditioned soup on the grid of boxes.

    Every box carries an independent soup of the loops with duration at most
    :math:`\rho_\varepsilon|\Lambda|` (exactly the loop measure off the long-loop
    event). Long loops: ``mode="default"`` puts exactly one per box;
    ``"poissonized"`` puts a zero-truncated Poisson number with parameter
    :math:`Z_\Lambda`, the long-loop mass of a box. With
    ``conditioning="global"`` a single long loop (or zero-truncated Poisson
    number with parameter ``|grid| Z``) is placed in a uniformly chosen box.

    ``bias_bound`` reports ``Z/2``, the order of the probability of a second
    long loop in a box that the default mode ignores.
    """
    if mode not in ("default", "poissonized"):
        raise ValueError(f"unknown mode {mode!r}")
    if conditioning not in ("per_box", "global"):
        raise ValueError(f"unknown conditioning {conditioning!r}")
    params.require_transient("the conditioned decomposition")
    p0 = params.with_mu(0.0)
    boxes = config.boxes()
    j_min = thermo.long_loop_threshold(p0, config.volume, config.rho_eps)
    if law is None:
        law = LongWindingLaw.build(p0, j_min)
    Z = config.volume * law.total_mass
    soups = []
    if with_soup:
        for b in boxes:
            sampler = WindingSampler(p0, config.volume, j_min - 1)
            soups.append(soup_from_windings(b, p0, sampler.batch(1, rng).windings(0), rng, j_min - 1))
    nb_ = len(boxes)
    if conditioning == "per_box":
        k = np.ones(nb_, np.int64) if mode == "default" else zero_truncated_poisson(Z, nb_, rng)
        owner = np.repeat(np.arange(nb_), k)
    else:
        k = 1 if mode == "default" else int(zero_truncated_poisson(Z * nb_, 1, rng)[0])
        owner = rng.integers(0, nb_, size=k)
    windings = law.sample(len(owner), rng, p0.d)
    lo = np.array([b.lo for b in boxes])[owner]
    bases = lo + rng.integers(0, config.N, size=(len(owner), config.d))
    long_loops = LoopBatch.sample(p0, bases, windings, rng)
    return DecomposedSample(config, soups, long_loops, owner, Z, Z / 2)


def long_loop_hits(loops: LoopBatch, K) -> np.ndarray:
    """Mask of loops that visit ``K``."""
    if len(loops) == 0:
        return np.zeros(0, dtype=bool)
    lk = SiteLookup.build(as_sites(K, loops.d))
    owner, sites, _, _ = loops.holding()
    hit = np.zeros(len(loops), dtype=bool)
    hit[owner[lk.contains(sites)]] = True
    return hit


@dataclass
class HitCountStats:
    counts: np.ndarray
    mean: float
    var: float
    dispersion: stats.Dispersion


def long_loops_hitting(samples, K) -> HitCountStats:
    """Per sample, the number of long loops meeting ``K``, with Poisson dispersion statistics."""
    K = np.asarray(K)
    if K.size == 0:
        counts = np.zeros(len(samples), dtype=np.int64)
    else:
        counts = np.array([int(long_loop_hits(s.long_loops, K).sum()) for s in samples])
    disp = stats.poisson_dispersion(counts) if counts.sum() > 0 else stats.Dispersion(
        float("nan"), 0.0, 0.0, 0.0, 0.0)
    return HitCountStats(counts, float(counts.mean()), float(counts.var(ddof=1)), disp)


def long_loop_hit_counts(config: ConditionedConfig, params: ModelParams, K, n_samples: int,
                         rng: np.random.Generator, mode: str = "poissonized") -> np.ndarray:
    """Counts of long loops meeting ``K`` over many decomposed samples, without the
    short-loop soups and without storing the paths."""
    p0 = params.with_mu(0.0)
    j_min = thermo.long_loop_threshold(p0, config.volume, config.rho_eps)
    law = LongWindingLaw.build(p0, j_min)
    Z = config.volume * law.total_mass
    boxes = config.boxes()
    lo_all = np.array([b.lo for b in boxes])
    nb_ = len(boxes)
    lk = SiteLookup.build(as_sites(K, config.d))
    counts = np.zeros(n_samples, dtype=np.int64)
    chunk = max(1, 200_000 // nb_)
    for s in range(0, n_samples, chunk):
        m = min(chunk, n_samples - s)
        if mode == "default":
            k = np.ones((m, nb_), np.int64)
        else:
            k = zero_truncated_poisson(Z, m * nb_, rng).reshape(m, nb_)
        owner_sample = np.repeat(np.arange(m), k.sum(axis=1))
        owner_box = np.concatenate([np.repeat(np.arange(nb_), row) for row in k])
        n = len(owner_box)
        windings = law.sample(n, rng, p0.d)
        bases = lo_all[owner_box] + rng.integers(0, config.N, size=(n, config.d))
        hit = hit_mask(p0, bases, windings, lk, rng)
        counts[s:s + m] = np.bincount(owner_sample[hit], minlength=m)
    return counts


def _axis_counts(p0: ModelParams, windings, rng):
    from .paths import sample_axis_counts
    return sample_axis_counts(p0.d, p0.beta * np.asarray(windings), rng)


def hit_mask(params: ModelParams, bases, windings, lookup: SiteLookup, rng: np.random.Generator) -> np.ndarray:
    """Whether independent bridges at ``bases`` with ``windings`` visit the lookup set."""
    counts = _axis_counts(params, windings, rng)
    durations = params.beta * np.asarray(windings, dtype=float)
    return _walks.loops_hit(np.asarray(bases, np.int64), counts, durations, child_key(rng),
                            np.arange(len(windings)), lookup.lo, lookup.dims, lookup.index.ravel())


# ---------------------------------------------------------------- checks


@dataclass
class TiltingReport:
    target_density: float
    tilted_mu: float
    conditioned_mean: float
    conditioned_stderr: float
    tilted_mean: float
    tilted_stderr: float
    relative_difference: float
    ks: stats.TestResult
    mean_attempts: float


def tilting_check(box: LatticeBox, params: ModelParams, rho_eps: float, rng: np.random.Generator,
                  n_samples: int = 2000, observable: str = "density") -> TiltingReport:
    r"""Compare the soup at ``mu < 0`` conditioned on :math:`\bar{\mathcal L} > \rho(\mu) + \rho_\varepsilon`
    with the unconditioned soup at :math:`b(\rho(\mu) + \rho_\varepsilon)`.

    ``observable`` is ``"density"`` (:math:`\bar{\mathcal L}`, from windings
    only) or ``"origin"`` (the occupation time of the box's first corner
    shifted to the origin, which needs the bridges).
    """
    if params.mu >= 0:
        raise ValueError("tilting_check needs mu < 0")
    target = thermo.rho(params) + rho_eps
    rc = thermo.critical_density(params)
    if target > rc:
        raise thermo.NoSolutionError(
            "target density above the critical density; use the interlacement regime")
    b = thermo.invert_density(params, target)
    tilted_params = params.with_mu(b)
    x0 = np.zeros(params.d, np.int64)
    build = observable != "density"
    samples, dens, screened = rejection_conditioned_batch(box, params, target, n_samples, rng,
                                                          proposal_mu=b, build_loops=build)
    if build:
        cond = np.array([s.loops.local_time_at(x0).sum() for s in samples])
        from .soup import sample_soup
        tilted = np.array([sample_soup(box, tilted_params, rng).loops.local_time_at(x0).sum()
                           for _ in range(n_samples)])
    else:
        cond = dens
        tilted = WindingSampler(tilted_params, box.volume).densities(n_samples, rng)
    attempts = [screened / n_samples]
    cm, cs = stats.mean_with_error(cond)
    tm, ts = stats.mean_with_error(tilted)
    return TiltingReport(target, b, cm, cs, tm, ts, abs(cm - tm) / tm,
                         stats.ks_two_sample(cond, tilted), float(np.mean(attempts)))


@dataclass
class EquivalenceReport:
    p_density: float
    p_long: float
    p_symmetric_difference: float
    ratio: float
    n: int


def conditioning_equivalence(box: LatticeBox, params: ModelParams, rho_eps: float, n_reps: int,
                             rng: np.random.Generator) -> EquivalenceReport:
    r"""Monte Carlo comparison of :math:`A_\rho = \{\bar{\mathcal L} > \rho_c + \rho_\varepsilon\}`
    and the long-loop event :math:`A_\Lambda` (some loop longer than :math:`\rho_\varepsilon|\Lambda|`).

    Returns the ratio :math:`P(A_\rho \triangle A_\Lambda)/P(A_\rho)`.
    """
    p0 = params.with_mu(0.0)
    rho = thermo.critical_density(p0) + rho_eps
    j_long = thermo.long_loop_threshold(p0, box.volume, rho_eps)
    sampler = WindingSampler(p0, box.volume, 64 * thermo.long_loop_threshold(p0, box.volume, rho))
    a_rho = np.zeros(n_reps, bool)
    a_long = np.zeros(n_reps, bool)
    chunk = 4096
    for s in range(0, n_reps, chunk):
        wb = sampler.batch(min(chunk, n_reps - s), rng)
        a_rho[s:s + len(wb)] = wb.densities() > rho
        a_long[s:s + len(wb)] = wb.max_winding() >= j_long
    pr = a_rho.mean()
    sym = np.mean(a_rho ^ a_long)
    return EquivalenceReport(float(pr), float(a_long.mean()), float(sym),
                             float(sym / pr) if pr > 0 else math.inf, n_reps)


# ---------------------------------------------------------------- single big jump


@nb.njit(cache=True, fastmath=True)
def _pareto_sum_exceed(n, trials, alpha, level, key):
    """Count trials where the sum of ``n`` centred Pareto(alpha, x_m = 1) variables exceeds ``level``."""
    mean = alpha / (alpha - 1.0)
    inv = -1.0 / alpha
    hits = 0
    for t in range(trials):
        sk = subkey(key, t)
        s = 0.0
        for i in range(n):
            s += np.exp(inv * np.log(uniform_open(sk, i)))
        if s - n * mean > level:
            hits += 1
    return hits


@dataclass
class BigJumpReport:
    ratio: float
    stderr: float
    exceed_prob: float
    single_tail: float
    trials: int


def big_jump_check(rng: np.random.Generator, alpha: float = 1.5, n: int = 10_000, b: float = 2.0,
                   trials: int = 10**6) -> BigJumpReport:
    r"""Single-big-jump ratio :math:`P(S_n > bn)/(n P(X_1 > bn))` for centred Pareto variables."""
    if alpha <= 1:
        raise ValueError("alpha must exceed 1 for a finite mean")
    mean = alpha / (alpha - 1)
    level = b * n
    hits = _pareto_sum_exceed(n, trials, alpha, level, child_key(rng))
    p = hits / trials
    single = (level + mean) ** (-alpha)
    ratio = p / (n * single)
    se = math.sqrt(max(p * (1 - p), 1.0 / trials) / trials) / (n * single)
    return BigJumpReport(ratio, se, p, single, trials)
