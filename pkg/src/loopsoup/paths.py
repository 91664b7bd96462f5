r"""Path skeletons: random-walk bridges, loops and trajectory windows.

A skeleton is a start site, the increasing jump times and the sequence of
visited sites. Loops of winding ``j`` have duration :math:`\beta j` and are
parametrised by :math:`[0, \beta j)` with the base point at time 0.

Bridges are sampled exactly. Coordinates of the walk are independent rate
``1/d`` walks, so a bridge of duration ``t`` has, on each axis, ``k`` up
and ``k`` down steps with :math:`P(k) \propto a^{2k}/(k!)^2`,
:math:`a = t/(2d)`. Given the counts, the step order is a uniform
arrangement of the multiset and the jump times are uniform order
statistics.

Many loops are held in a :class:`LoopBatch` (ragged arrays), which is what
the soup samplers produce; :class:`Loop` is the single-path view used by
the geometric operations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import special

from . import _walks
from .kernels import ModelParams
from .lattice import SiteLookup, as_sites
from .rng import child_key


# ---------------------------------------------------------------- skeletons


@dataclass(frozen=True)
class PathSkeleton:
    """Piecewise-constant nearest-neighbour path on ``[0, duration)``.

    ``sites[0]`` is the start, ``sites[r + 1]`` the position after the jump
    at ``jump_times[r]``.
    """

    sites: np.ndarray
    jump_times: np.ndarray
    duration: float

    def __post_init__(self):
        if len(self.sites) != len(self.jump_times) + 1:
            raise ValueError("need one more site than jump times")

    @property
    def start_site(self) -> np.ndarray:
        return self.sites[0]

    @property
    def jump_targets(self) -> np.ndarray:
        return self.sites[1:]

    @property
    def n_jumps(self) -> int:
        return len(self.jump_times)

    def at(self, t) -> np.ndarray:
        """Position at time(s) ``t`` (right-continuous)."""
        k = np.searchsorted(self.jump_times, t, side="right")
        return self.sites[k]

    def holding(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Sites, start times and lengths of the holding intervals."""
        starts = np.concatenate([[0.0], self.jump_times])
        ends = np.concatenate([self.jump_times, [self.duration]])
        return self.sites, starts, ends - starts

    def local_time(self, x) -> float:
        x = np.asarray(x)
        sites, _, dt = self.holding()
        return float(dt[np.all(sites == x, axis=1)].sum())

    def check(self) -> None:
        """Raise if the nearest-neighbour or time-ordering invariants fail."""
        steps = np.abs(np.diff(self.sites, axis=0)).sum(axis=1)
        if np.any(steps != 1):
            raise AssertionError("consecutive sites are not neighbours")
        if self.n_jumps:
            if np.any(np.diff(self.jump_times) <= 0) or self.jump_times[0] < 0:
                raise AssertionError("jump times not increasing")
            if self.jump_times[-1] >= self.duration:
                raise AssertionError("jump after the end of the path")


@dataclass(frozen=True)
class Loop:
    """Closed path of duration ``beta * winding`` based at ``skeleton.start_site``."""

    winding: int
    beta: float
    skeleton: PathSkeleton

    def __post_init__(self):
        if not np.array_equal(self.skeleton.sites[0], self.skeleton.sites[-1]):
            raise ValueError("loop is not closed")
        if not math.isclose(self.skeleton.duration, self.beta * self.winding, rel_tol=1e-12):
            raise ValueError("duration must equal beta * winding")

    @property
    def base(self) -> np.ndarray:
        return self.skeleton.sites[0]

    @property
    def duration(self) -> float:
        return self.skeleton.duration

    @classmethod
    def constant(cls, x, winding: int = 1, beta: float = 1.0) -> "Loop":
        x = np.asarray(x, dtype=np.int64)
        return cls(winding, beta, PathSkeleton(x[None, :].copy(), np.zeros(0), beta * winding))


@dataclass(frozen=True)
class TrajectoryWindow:
    """A doubly infinite trajectory seen through a window ``K``, truncated to
    ``[-backward.duration, forward.duration)``.

    Time 0 is the first entrance into ``K``. ``backward`` is the time
    reversal of the past: ``omega(-s) = backward.at(s)`` for ``s > 0``; it
    never returns to ``K`` after its first jump. ``origin`` is a shift of
    the parametrisation (evaluate at ``t + origin``).
    """

    window: np.ndarray
    entry: np.ndarray
    forward: PathSkeleton
    backward: PathSkeleton
    origin: float = 0.0

    @property
    def horizons(self) -> tuple[float, float]:
        return self.forward.duration, self.backward.duration

    def at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float) + self.origin
        out = np.empty(t.shape + (len(self.entry),), dtype=np.int64)
        fwd = t >= 0
        out[fwd] = self.forward.at(t[fwd])
        if np.any(~fwd):
            # omega is right-continuous; the reversed skeleton is too, so take the left limit
            s = -t[~fwd]
            k = np.searchsorted(self.backward.jump_times, s, side="left")
            out[~fwd] = self.backward.sites[k]
        return out

    def holding(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        fs, ft, fdt = self.forward.holding()
        bs, bt, bdt = self.backward.holding()
        # backward interval [bt, bt+bdt) in reversed time is (-(bt+bdt), -bt]
        bstart = -(bt + bdt)
        sites = np.concatenate([bs[::-1], fs])
        starts = np.concatenate([bstart[::-1], ft]) - self.origin
        return sites, starts, np.concatenate([bdt[::-1], fdt])


# ---------------------------------------------------------------- bridge sampling


@lru_cache(maxsize=4096)
def _axis_count_table(a: float) -> tuple[int, np.ndarray]:
    """pmf of the per-axis up-step count of a bridge, on a window around its mode."""
    if a == 0:
        return 0, np.ones(1)
    width = 15.0 * math.sqrt(a) + 20.0
    lo = max(0, int(a - width))
    k = np.arange(lo, int(a + width) + 1, dtype=float)
    logp = 2 * k * math.log(a) - 2 * special.gammaln(k + 1) - (math.log(special.ive(0, 2 * a)) + 2 * a)
    p = np.exp(logp)
    p /= p.sum()
    p.setflags(write=False)
    return lo, p


def axis_count_pmf(d: int, t: float) -> tuple[int, np.ndarray]:
    """``(k_min, pmf)`` of the number of ``+e_i`` steps of a bridge of duration ``t``."""
    return _axis_count_table(float(t) / (2 * d))


def sample_axis_counts(d: int, durations: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Per-axis up-step counts, shape ``(n, d)``, for bridges of the given durations."""
    durations = np.asarray(durations, dtype=float)
    out = np.zeros((len(durations), d), dtype=np.int64)
    if len(durations) == 0:
        return out
    uniq, inv = np.unique(durations, return_inverse=True)
    u = rng.random((len(durations), d))
    order = np.argsort(inv, kind="stable")
    bounds = np.searchsorted(inv[order], np.arange(len(uniq) + 1))
    for g, t in enumerate(uniq):
        rows = order[bounds[g]:bounds[g + 1]]
        lo, p = axis_count_pmf(d, t)
        cdf = np.cumsum(p)
        k = np.searchsorted(cdf, u[rows] * cdf[-1], side="right")
        out[rows] = lo + np.minimum(k, len(p) - 1)
    return out


def jump_count_pmf(d: int, t: float, n_max: int) -> np.ndarray:
    r"""Law of the number of jumps of a bridge of duration ``t``:
    :math:`e^{-t} t^n/n!\,\pi_n(0,0)/p_t(0)` for ``n = 0..n_max`` (odd ``n`` have mass 0).

    The discrete return probabilities :math:`\pi_n` are obtained by
    convolving the one-axis laws, avoiding any lattice enumeration.
    """
    lo, p = axis_count_pmf(d, t)
    full = np.zeros(lo + len(p))
    full[lo:] = p
    total = np.ones(1)
    for _ in range(d):
        total = np.convolve(total, full)
    out = np.zeros(n_max + 1)
    m = min(len(total), n_max // 2 + 1)
    out[0:2 * m:2] = total[:m]
    return out


@dataclass
class LoopBatch:
    """Ragged storage of many loops.

    Loop ``i`` starts at ``bases[i]``, has winding ``windings[i]`` and jumps
    ``times[offsets[i]:offsets[i+1]]`` with step codes from the same slice
    (``2*axis`` is ``+e_axis``, ``2*axis+1`` is ``-e_axis``).
    """

    bases: np.ndarray
    windings: np.ndarray
    beta: float
    offsets: np.ndarray
    times: np.ndarray
    steps: np.ndarray

    @classmethod
    def empty(cls, d: int, beta: float = 1.0) -> "LoopBatch":
        return cls(np.zeros((0, d), np.int64), np.zeros(0, np.int64), beta,
                   np.zeros(1, np.int64), np.zeros(0), np.zeros(0, np.int8))

    @classmethod
    def sample(cls, params: ModelParams, bases, windings, rng: np.random.Generator) -> "LoopBatch":
        """Independent bridges ``P^{beta j}_{x,x}`` (normalised) at the given bases and windings."""
        bases = np.asarray(bases, dtype=np.int64).reshape(-1, params.d)
        windings = np.asarray(windings, dtype=np.int64)
        durations = params.beta * windings
        counts = sample_axis_counts(params.d, durations, rng)
        offsets = np.zeros(len(windings) + 1, dtype=np.int64)
        np.cumsum(2 * counts.sum(axis=1), out=offsets[1:])
        times = np.empty(offsets[-1])
        steps = np.empty(offsets[-1], dtype=np.int8)
        key = child_key(rng)
        _walks.fill_bridges(counts, durations, key, np.arange(len(windings)), offsets, times, steps)
        return cls(bases, windings, params.beta, offsets, times, steps)

    def __len__(self) -> int:
        return len(self.windings)

    @property
    def d(self) -> int:
        return self.bases.shape[1]

    @property
    def durations(self) -> np.ndarray:
        return self.beta * self.windings

    def select(self, mask) -> "LoopBatch":
        idx = np.flatnonzero(mask) if np.asarray(mask).dtype == bool else np.asarray(mask)
        lengths = np.diff(self.offsets)[idx]
        offsets = np.zeros(len(idx) + 1, dtype=np.int64)
        np.cumsum(lengths, out=offsets[1:])
        take = np.concatenate([np.arange(self.offsets[i], self.offsets[i + 1]) for i in idx]) \
            if len(idx) else np.zeros(0, np.int64)
        return LoopBatch(self.bases[idx], self.windings[idx], self.beta, offsets,
                         self.times[take], self.steps[take])

    @staticmethod
    def concatenate(batches: Sequence["LoopBatch"]) -> "LoopBatch":
        batches = list(batches)
        shifts = np.cumsum([0] + [b.offsets[-1] for b in batches[:-1]])
        offsets = np.concatenate([[0]] + [b.offsets[1:] + s for b, s in zip(batches, shifts)])
        return LoopBatch(np.concatenate([b.bases for b in batches]),
                         np.concatenate([b.windings for b in batches]), batches[0].beta,
                         offsets.astype(np.int64), np.concatenate([b.times for b in batches]),
                         np.concatenate([b.steps for b in batches]))

    def sites_of(self, i: int) -> np.ndarray:
        codes = self.steps[self.offsets[i]:self.offsets[i + 1]]
        delta = np.zeros((len(codes) + 1, self.d), dtype=np.int64)
        delta[np.arange(1, len(codes) + 1), codes >> 1] = 1 - 2 * (codes & 1)
        return self.bases[i] + np.cumsum(delta, axis=0)

    def loop(self, i: int) -> Loop:
        sk = PathSkeleton(self.sites_of(i), self.times[self.offsets[i]:self.offsets[i + 1]].copy(),
                          float(self.durations[i]))
        return Loop(int(self.windings[i]), self.beta, sk)

    def __iter__(self):
        return (self.loop(i) for i in range(len(self)))

    def holding(self):
        """Flattened holding intervals: owner index, site, start time, length."""
        return _walks.holding_intervals(self.bases, self.durations.astype(float), self.offsets,
                                        self.times, self.steps, np.zeros(len(self)))

    def local_time_at(self, x) -> np.ndarray:
        """Local time of every loop at site ``x``."""
        return _walks.local_times_at(self.bases, self.durations.astype(float), self.offsets,
                                     self.times, self.steps, np.asarray(x, dtype=np.int64))

    def max_displacement(self) -> np.ndarray:
        """Largest sup-norm distance from the base reached by each loop."""
        owner, sites, _, _ = self.holding()
        dist = np.abs(sites - self.bases[owner]).max(axis=1) if len(owner) else np.zeros(0)
        out = np.zeros(len(self), dtype=np.int64)
        np.maximum.at(out, owner, dist)
        return out


def sample_bridge(params: ModelParams, x, t: float, rng: np.random.Generator) -> PathSkeleton:
    """Continuous-time random-walk bridge from ``x`` to ``x`` of duration ``t``."""
    if not t > 0:
        raise ValueError("duration must be positive")
    d = params.d
    counts = sample_axis_counts(d, np.array([t]), rng)
    m = int(2 * counts.sum())
    times = np.empty(m)
    steps = np.empty(m, dtype=np.int8)
    _walks.fill_bridges(counts, np.array([float(t)]), child_key(rng), np.zeros(1, np.int64),
                        np.array([0, m], np.int64), times, steps)
    batch = LoopBatch(np.asarray(x, np.int64).reshape(1, d), np.zeros(1, np.int64), 1.0,
                      np.array([0, m], np.int64), times, steps)
    return PathSkeleton(batch.sites_of(0), times, float(t))


def sample_loop(params: ModelParams, x, winding: int, rng: np.random.Generator) -> Loop:
    return Loop(int(winding), params.beta, sample_bridge(params, x, params.beta * winding, rng))


# ---------------------------------------------------------------- geometric operations


def shift(path, s: float):
    """Shift the time parametrisation by ``s``: the result evaluates at ``t`` to the
    input at ``t + s`` (modulo the period for loops).

    When ``s`` is a jump time of a loop, that jump moves to the last float
    before the period end, so the skeleton stays closed.
    """
    if isinstance(path, TrajectoryWindow):
        return TrajectoryWindow(path.window, path.entry, path.forward, path.backward, path.origin + s)
    if not isinstance(path, Loop):
        raise TypeError("shift applies to loops and trajectory windows")
    ell = path.duration
    s = float(s) % ell
    sk = path.skeleton
    if s == 0 or sk.n_jumps == 0:
        return path
    k = int(np.searchsorted(sk.jump_times, s, side="right"))
    times = np.concatenate([sk.jump_times[k:] - s, sk.jump_times[:k] + (ell - s)])
    sites = np.concatenate([sk.sites[k:-1], sk.sites[:k + 1]])
    # rounding may push a jump onto the period end
    times = np.minimum(times, np.nextafter(ell, 0.0))
    return Loop(path.winding, path.beta, PathSkeleton(sites, times, ell))


def local_time(path, x) -> float:
    """Total time spent at ``x``."""
    if isinstance(path, Loop):
        return path.skeleton.local_time(x)
    if isinstance(path, TrajectoryWindow):
        return path.forward.local_time(x) + path.backward.local_time(x)
    return path.local_time(x)


def _circular_intervals(loop: Loop):
    """Holding intervals of a loop with the first and last merged (same site)."""
    sites, starts, dt = loop.skeleton.holding()
    if len(sites) == 1:
        return sites, starts, dt
    dt = dt[:-1].copy()
    dt[0] += loop.duration - loop.skeleton.jump_times[-1]
    starts = starts[:-1].copy()
    starts[0] = loop.skeleton.jump_times[-1]
    return sites[:-1], starts, dt


def _entrance(loop: Loop, inK: np.ndarray, dt: np.ndarray) -> tuple[int, float]:
    """Index of the circular interval ending the longest K-avoiding stretch, and its length."""
    n = len(dt)
    first = int(np.argmax(inK))
    best, best_idx, run = 0.0, first, 0.0
    for q in range(1, n + 1):
        c = (first + q) % n
        if not inK[c]:
            run += dt[c]
        else:
            if run > best:
                best, best_idx = run, c
            run = 0.0
    return best_idx, best


def canonical_rep(loop: Loop, K) -> Loop:
    """Rotation of ``loop`` starting at the entrance into ``K`` that follows the
    longest ``K``-avoiding stretch, which thus sits at the end of the loop."""
    K = as_sites(K, loop.base.shape[0])
    sites, starts, dt = _circular_intervals(loop)
    inK = SiteLookup.build(K).contains(sites)
    if not inK.any():
        raise ValueError("loop does not intersect K")
    idx, _ = _entrance(loop, inK, dt)
    return shift(loop, starts[idx])


def d_K(path, K) -> float:
    """Time between the first entrance into and the last exit from ``K``
    (for loops: the duration minus the longest ``K``-avoiding stretch)."""
    if isinstance(path, TrajectoryWindow):
        lk = SiteLookup.build(K)
        sites, _, dt = path.forward.holding()
        inK = np.flatnonzero(lk.contains(sites))
        if len(inK) == 0:
            return 0.0
        ends = np.concatenate([path.forward.jump_times, [path.forward.duration]])
        return float(ends[inK[-1]])
    if isinstance(path, PathSkeleton):
        lk = SiteLookup.build(K)
        sites, starts, dt = path.holding()
        inK = np.flatnonzero(lk.contains(sites))
        if len(inK) == 0:
            return 0.0
        return float(starts[inK[-1]] + dt[inK[-1]] - starts[inK[0]])
    sites, _, dt = _circular_intervals(path)
    inK = SiteLookup.build(K).contains(sites)
    if not inK.any():
        return 0.0
    _, best = _entrance(path, inK, dt)
    return float(path.duration - best)


def particle_map(paths: Iterable, K, rng: np.random.Generator, beta: float | None = None) -> np.ndarray:
    """Particle positions inside ``K``.

    Each path is re-anchored at its (canonical) entrance into ``K``; with an
    independent ``U`` uniform on ``[0, beta)``, the positions at times
    ``k*beta - U`` (``k`` integer, within the path's time range) that lie in
    ``K`` are the particles. Returns an ``(m, d)`` array with multiplicity.
    """
    out = []
    lk = None
    for p in paths:
        if lk is None:
            d = p.base.shape[0] if isinstance(p, Loop) else len(p.entry)
            Ks = as_sites(K, d)
            lk = SiteLookup.build(Ks)
        if isinstance(p, Loop):
            b = p.beta
            sites, starts, dt = _circular_intervals(p)
            inK = lk.contains(sites)
            if not inK.any():
                continue
            idx, _ = _entrance(p, inK, dt)
            u = rng.uniform(0.0, b)
            times = (starts[idx] + b * np.arange(1, p.winding + 1) - u) % p.duration
            pos = p.skeleton.at(times)
        elif isinstance(p, TrajectoryWindow):
            if beta is None:
                raise ValueError("beta is needed for trajectory windows")
            u = rng.uniform(0.0, beta)
            t_fwd, t_bwd = p.horizons
            k = np.arange(math.ceil((u - t_bwd) / beta), math.floor((t_fwd + u) / beta) + 1)
            times = k * beta - u
            times = times[(times >= -t_bwd) & (times < t_fwd)]
            pos = p.at(times - p.origin)
        else:
            raise TypeError("particle_map takes loops and trajectory windows")
        out.append(pos[lk.contains(pos)])
    if not out:
        d = lk.sites.shape[1] if lk is not None else np.asarray(K).reshape(-1).shape[0]
        return np.zeros((0, d), dtype=np.int64)
    return np.concatenate(out)


# ---------------------------------------------------------------- interaction energies


def _pair_sum(v: Callable, pos: np.ndarray, counts: np.ndarray) -> float:
    """``1/2 * sum`` over ordered pairs of distinct slots, given slot multiplicities per site."""
    if len(pos) == 0:
        return 0.0
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1, dtype=float))
    w = np.outer(counts, counts).astype(float)
    np.fill_diagonal(w, counts * (counts - 1.0))
    vals = np.asarray(v(dist), dtype=float)
    mask = w > 0
    return 0.5 * float(np.sum(w[mask] * vals[mask]))


def _slots(path, beta: float, Kl: SiteLookup | None):
    """Pieces of a path cut at multiples of beta: (sites, start within the slot, length)."""
    if isinstance(path, Loop):
        sites, starts, dt = path.skeleton.holding()
    elif isinstance(path, TrajectoryWindow):
        sites, starts, dt = path.holding()
    else:
        sites, starts, dt = path.holding()
    ends = starts + dt
    out = []
    k0 = math.floor(starts[0] / beta)
    k1 = math.ceil(ends[-1] / beta)
    for k in range(k0, k1):
        a, b = k * beta, (k + 1) * beta
        sel = (ends > a) & (starts < b)
        s = np.maximum(starts[sel], a)
        e = np.minimum(ends[sel], b)
        ok = e > s
        if not ok.any():
            continue
        slot_sites = sites[sel][ok]
        if Kl is not None:
            first = slot_sites[np.argmin(s[ok])]
            if not Kl.contains(first)[0]:
                continue
        out.append((slot_sites, s[ok] - a, e[ok] - s[ok]))
    return out


def interaction_energy(paths: Sequence, v: Callable, K="all", kind: str = "slots",
                       beta: float | None = None) -> float:
    r"""Pair interaction energy of a finite configuration.

    ``kind="slots"`` aligns the paths in time slots of length beta and sums
    :math:`\int_0^\beta v(|\omega_i(k\beta+t) - \omega_j(m\beta+t)|)dt` over
    distinct slot pairs (half the ordered sum). With ``K`` a site set only
    slots starting in ``K`` count. ``kind="time"`` is the double time
    integral :math:`\tfrac12\sum_{i<j}\iint v\,1\{\cdot\in K\}` over pairs of
    distinct paths, restricted to ``K`` (``"all"`` means no restriction).

    ``v`` maps Euclidean distances (array) to values in ``[0, inf]``;
    infinite values give ``inf`` only when realised on a set of positive
    time measure.
    """
    paths = list(paths)
    if not paths:
        return 0.0
    if beta is None:
        betas = [p.beta for p in paths if isinstance(p, Loop)]
        if not betas:
            raise ValueError("beta is needed when no loop is present")
        beta = betas[0]
    d = len(paths[0].base) if isinstance(paths[0], Loop) else len(paths[0].entry)
    Kl = None if isinstance(K, str) and K == "all" else SiteLookup.build(as_sites(K, d))
    if kind == "time":
        return _time_energy(paths, v, Kl)
    if kind != "slots":
        raise ValueError(f"unknown kind {kind!r}")
    pieces = [piece for p in paths for piece in _slots(p, beta, Kl)]
    if len(pieces) < 2:
        return 0.0
    # sweep over [0, beta): all breakpoints of all slots
    cuts = np.unique(np.concatenate([[0.0, beta]] + [np.concatenate([s, s + dt]) for _, s, dt in pieces]))
    cuts = cuts[(cuts >= 0) & (cuts <= beta)]
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b <= a:
            continue
        mid = 0.5 * (a + b)
        pos = []
        for sites, s, dt in pieces:
            hit = np.flatnonzero((s <= mid) & (mid < s + dt))
            if len(hit):
                pos.append(sites[hit[0]])
        if len(pos) < 2:
            continue
        uniq, counts = np.unique(np.asarray(pos), axis=0, return_counts=True)
        e = _pair_sum(v, uniq, counts)
        if e == math.inf:
            return math.inf
        total += (b - a) * e
    return total


def _time_energy(paths, v, Kl) -> float:
    fields = []
    for p in paths:
        sites, _, dt = p.skeleton.holding() if isinstance(p, Loop) else p.holding()
        if Kl is not None:
            keep = Kl.contains(sites)
            sites, dt = sites[keep], dt[keep]
        if len(sites):
            uniq, inv = np.unique(sites, axis=0, return_inverse=True)
            fields.append((uniq, np.bincount(inv.ravel(), weights=dt)))
        else:
            fields.append(None)
    total = 0.0
    for i in range(len(fields)):
        for j in range(i + 1, len(fields)):
            if fields[i] is None or fields[j] is None:
                continue
            (si, li), (sj, lj) = fields[i], fields[j]
            diff = si[:, None, :] - sj[None, :, :]
            vals = np.asarray(v(np.sqrt(np.sum(diff * diff, axis=-1, dtype=float))), dtype=float)
            w = np.outer(li, lj)
            m = w > 0
            total += 0.5 * float(np.sum(w[m] * vals[m]))
            if total == math.inf:
                return math.inf
    return total
