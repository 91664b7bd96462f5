r"""Equilibrium measure, capacity and random interlacements seen through a window.

The equilibrium measure :math:`e_K(z)` is the probability that the walk
started at ``z`` never visits ``K`` after its first jump; its total mass is
the capacity. Two independent routes compute it:

* :func:`equilibrium_solve` solves the discrete Dirichlet problem for the
  hitting probability :math:`h(y) = P_y(H_K < \infty)` on a bounded
  domain. Outside the domain :math:`h(y) = \sum_z G(y-z) e_K(z)` is imposed
  with the asymptotic Green's function, which makes the boundary data
  linear in the unknown :math:`e_K` and leaves a small linear system.
* :func:`equilibrium_mc` runs walks to a sphere and corrects for returns
  from the sphere with the same Green's function identity.

Interlacement trajectories meeting ``K`` are a Poisson number with mean
:math:`u\,\mathrm{Cap}(K)`; each enters at ``z`` with probability
:math:`e_K(z)/\mathrm{Cap}(K)`, continues as a free walk and has a past that
is a walk from ``z`` conditioned never to return to ``K``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, sparse
from scipy.sparse import linalg as splinalg

from . import _walks, stats, thermo
from .kernels import (ModelParams, green_asymptotic, green_asymptotic_constant, occupation_tail,
                      transition_kernel)
from .lattice import SiteLookup, as_sites, diameter
from .paths import PathSkeleton, TrajectoryWindow
from .rng import child_key


@dataclass(frozen=True)
class EquilibriumData:
    window: np.ndarray
    escape: np.ndarray
    capacity: float
    method: str
    error: float
    escape_error: np.ndarray | None = None

    def normalized(self) -> np.ndarray:
        return self.escape / self.capacity


def _neighbours(d: int) -> np.ndarray:
    e = np.eye(d, dtype=np.int64)
    return np.concatenate([e, -e])


def _domain(K: np.ndarray, R: float) -> np.ndarray:
    """Sites within Euclidean distance ``R`` of some site of ``K``."""
    d = K.shape[1]
    r = int(math.ceil(R))
    offs = np.array(list(itertools.product(range(-r, r + 1), repeat=d)), dtype=np.int64)
    offs = offs[np.sum(offs * offs, axis=1) <= R * R]
    return np.unique((K[:, None, :] + offs[None, :, :]).reshape(-1, d), axis=0)


def _solve_once(K: np.ndarray, params: ModelParams, R: float, tol: float) -> np.ndarray:
    d = params.d
    D = _domain(K, R)
    lk_K = SiteLookup.build(K)
    lk_D = SiteLookup.build(D)
    free = ~lk_K.contains(D)
    U = D[free]
    lk_U = SiteLookup.build(U)
    nbr = _neighbours(d)
    m = len(U)
    rows, cols = [], []
    n_rhs = 1 + len(K)
    rhs = np.zeros((m, n_rhs))
    for e in nbr:
        y = U + e
        iu = lk_U.find(y)
        inside = iu >= 0
        rows.append(np.flatnonzero(inside))
        cols.append(iu[inside])
        ik = lk_K.find(y)
        rhs[ik >= 0, 0] += 1.0 / (2 * d)
        out = (iu < 0) & (ik < 0)
        # exterior neighbours carry G(y - z) for each z in K
        if out.any():
            diff = y[out][:, None, :] - K[None, :, :]
            g = green_asymptotic(d, np.sqrt(np.sum(diff * diff, axis=-1)))
            rhs[out, 1:] += g / (2 * d)
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    A = sparse.identity(m, format="csr") - sparse.csr_matrix(
        (np.full(len(r), 1.0 / (2 * d)), (r, c)), shape=(m, m))
    sol = np.empty((m, n_rhs))
    for k in range(n_rhs):
        x, info = splinalg.cg(A, rhs[:, k], rtol=tol, atol=0.0, maxiter=20 * m)
        if info != 0:
            raise RuntimeError("conjugate gradient did not converge")
        sol[:, k] = x
    # e(z) = 1 - avg_nbr h, with h = h0 + sum_w e(w) h_w, h0 = 1 on K, h_w = 0 on K
    nK = len(K)
    a = np.ones(nK)
    B = np.zeros((nK, nK))
    for e in nbr:
        y = K + e
        ik = lk_K.find(y)
        iu = lk_U.find(y)
        a -= np.where(ik >= 0, 1.0, 0.0) / (2 * d)
        ok = iu >= 0
        a[ok] -= sol[iu[ok], 0] / (2 * d)
        B[ok] += sol[iu[ok], 1:] / (2 * d)
    return np.linalg.solve(np.eye(nK) + B, a)


def equilibrium_solve(K, params: ModelParams, domain_radius: float = 12.0, tol: float = 1e-12) -> EquilibriumData:
    """Equilibrium measure from the Dirichlet problem on the union of balls of radius
    ``domain_radius`` around the sites of ``K``.

    The error estimate is the change of the capacity when the radius is
    reduced to three quarters.
    """
    params.require_transient("the capacity of a finite set")
    K = as_sites(K, params.d)
    if len(K) == 0:
        raise ValueError("K must be nonempty")
    e = _solve_once(K, params, domain_radius, tol)
    e_small = _solve_once(K, params, 0.75 * domain_radius, tol)
    e = np.clip(e, 0.0, 1.0)
    err = np.abs(e - np.clip(e_small, 0.0, 1.0))
    return EquilibriumData(K, e, float(e.sum()), "linear-solve", float(err.sum()), err)


def equilibrium_mc(K, params: ModelParams, n_walks: int, escape_radius: float,
                   rng: np.random.Generator) -> EquilibriumData:
    r"""Monte Carlo equilibrium measure.

    From every ``z`` in ``K``, ``n_walks`` walks take one step and then run
    until they hit ``K`` or leave the ball of radius ``escape_radius``
    around the centre of ``K``. With ``f`` the escape fractions and
    :math:`A(z, w)` the mean of :math:`1\{\text{escape}\}\,G(Y - w)` over
    exit points ``Y``, the equilibrium measure solves :math:`(I + A)e = f`.
    """
    params.require_transient("the capacity of a finite set")
    K = as_sites(K, params.d)
    lk = SiteLookup.build(K)
    center = np.rint(K.mean(axis=0)).astype(np.int64)
    escaped, exit_pos, owner = _walks.escape_walks(K, n_walks, lk.lo, lk.dims, lk.index.ravel(),
                                                   center, float(escape_radius), child_key(rng), 0)
    f = escaped / n_walks
    nK = len(K)
    A = np.zeros((nK, nK))
    if len(exit_pos):
        diff = exit_pos[:, None, :] - K[None, :, :]
        g = green_asymptotic(params.d, np.sqrt(np.sum(diff * diff, axis=-1)))
        np.add.at(A, owner, g)
    A /= n_walks
    e = np.linalg.solve(np.eye(nK) + A, f)
    se = np.sqrt(np.maximum(f * (1 - f), 1.0 / n_walks) / n_walks)
    return EquilibriumData(K, e, float(e.sum()), "monte-carlo", float(np.sqrt(np.sum(se ** 2))), se)


def capacity(K, params: ModelParams, domain_radius: float = 12.0) -> float:
    return equilibrium_solve(K, params, domain_radius).capacity


# ---------------------------------------------------------------- sampling


def default_horizon(K) -> float:
    """``20 * diam(K)^2`` time units, with the diameter taken at least 1."""
    return 20.0 * max(diameter(np.asarray(K)), 1.0) ** 2


@dataclass
class InterlacementSample:
    level: float
    window: np.ndarray
    trajectories: list
    horizons: tuple
    residual_bound: float
    backward_attempts: int = 0

    def __len__(self) -> int:
        return len(self.trajectories)


def return_after_horizon_bound(params: ModelParams, K, horizon: float) -> float:
    r"""Bound :math:`|K| \int_T^\infty p_t(0)\,dt` on the probability that a walk
    returns to ``K`` after time ``T``."""
    value, err = occupation_tail(params, horizon)
    return len(np.atleast_2d(K)) * (value + err)


def _skeleton(start, times, codes, horizon) -> PathSkeleton:
    d = len(start)
    delta = np.zeros((len(codes) + 1, d), dtype=np.int64)
    delta[np.arange(1, len(codes) + 1), codes >> 1] = 1 - 2 * (codes.astype(np.int64) & 1)
    return PathSkeleton(start + np.cumsum(delta, axis=0), times, float(horizon))


def sample_interlacements(K, u: float, params: ModelParams, rng: np.random.Generator,
                          horizons: tuple[float, float] | None = None,
                          eq: EquilibriumData | None = None, max_tries: int = 100_000) -> InterlacementSample:
    """Interlacement trajectories at level ``u`` that meet ``K``, truncated to
    ``horizons = (forward, backward)`` time units around the entrance."""
    if u < 0:
        raise ValueError("u must be nonnegative")
    params.require_transient("random interlacements")
    K = as_sites(K, params.d)
    if eq is None:
        eq = equilibrium_solve(K, params)
    if horizons is None:
        h = default_horizon(K)
        horizons = (h, h)
    t_fwd, t_bwd = horizons
    lk = SiteLookup.build(K)
    n = rng.poisson(u * eq.capacity) if u > 0 else 0
    entries = rng.choice(len(K), size=n, p=eq.normalized()) if n else np.zeros(0, np.int64)
    key = child_key(rng)
    trajs = []
    attempts = 0
    idx = lk.index.ravel()
    for i, z in enumerate(entries):
        start = K[z]
        ft, fs, _ = _walks.walk_skeleton(start, t_fwd, lk.lo, lk.dims, idx, False, key, 2 * i, 1)
        bt, bs, tries = _walks.walk_skeleton(start, t_bwd, lk.lo, lk.dims, idx, True, key, 2 * i + 1,
                                             max_tries)
        if tries > max_tries:
            raise RuntimeError("backward conditioning failed; the entry site has tiny escape probability")
        attempts += tries
        trajs.append(TrajectoryWindow(K, start.copy(), _skeleton(start, ft, fs, t_fwd),
                                      _skeleton(start, bt, bs, t_bwd)))
    return InterlacementSample(u, K, trajs, (t_fwd, t_bwd),
                               return_after_horizon_bound(params, K, t_bwd), attempts)


def trajectory_hits(traj: TrajectoryWindow, K) -> bool:
    lk = SiteLookup.build(as_sites(K, len(traj.entry)))
    return bool(lk.contains(traj.forward.sites).any() or lk.contains(traj.backward.sites).any())


@dataclass
class AvoidanceReport:
    empirical: float
    stderr: float
    expected: float
    z_score: float
    n: int


def avoidance_check(K, u: float, params: ModelParams, n_draws: int, rng: np.random.Generator,
                    eq: EquilibriumData | None = None, outer=None) -> AvoidanceReport:
    r"""Fraction of draws in which no trajectory meets ``K``, against :math:`e^{-u\,\mathrm{Cap}(K)}`.

    With ``outer`` a window containing ``K``, trajectories are sampled
    through ``outer`` and tested for visits to ``K`` (path-level check of
    the restriction property); otherwise only the counts are needed.
    """
    K = as_sites(K, params.d)
    if eq is None:
        eq = equilibrium_solve(K, params)
    if outer is None:
        counts = rng.poisson(u * eq.capacity, size=n_draws)
        empty = counts == 0
    else:
        outer = as_sites(outer, params.d)
        eq_out = equilibrium_solve(outer, params)
        empty = np.empty(n_draws, bool)
        for i in range(n_draws):
            s = sample_interlacements(outer, u, params, rng, eq=eq_out)
            empty[i] = not any(trajectory_hits(t, K) for t in s.trajectories)
    p = float(empty.mean())
    expected = math.exp(-u * eq.capacity)
    se = math.sqrt(expected * (1 - expected) / n_draws)
    return AvoidanceReport(p, se, expected, (p - expected) / se, n_draws)


# ---------------------------------------------------------------- hitting asymptotics


@dataclass
class HittingReport:
    ratio: float
    stderr: float
    estimate: float
    prediction: float
    n: int


def hitting_asymptotics_check(K, z, x, t_window: tuple[float, float], n_samples: int,
                              params: ModelParams, rng: np.random.Generator,
                              eq: EquilibriumData | None = None) -> HittingReport:
    r"""Compare :math:`P_x(\omega(H_K) = z,\ H_K \in [t_1, t_2])` with
    :math:`e_K(z)\int_{t_1}^{t_2} p_t(x - z)\,dt`."""
    K = as_sites(K, params.d)
    z = np.asarray(z, dtype=np.int64)
    x = np.asarray(x, dtype=np.int64)
    lk = SiteLookup.build(K)
    iz = int(lk.find(z)[0])
    if iz < 0:
        raise ValueError("z must belong to K")
    if eq is None:
        eq = equilibrium_solve(K, params)
    t1, t2 = t_window
    t_hit, where = _walks.first_hits(x, n_samples, lk.lo, lk.dims, lk.index.ravel(), float(t2),
                                     np.inf, child_key(rng), 0)
    hit = (where == iz) & (t_hit >= t1) & (t_hit <= t2)
    p = float(hit.mean())
    se = math.sqrt(max(p * (1 - p), 1.0 / n_samples) / n_samples)
    integral, _ = integrate.quad(lambda t: transition_kernel(params, t, x - z), t1, t2,
                                 limit=200, epsrel=1e-10)
    pred = eq.escape[iz] * integral
    return HittingReport(p / pred, se / pred, p, pred, n_samples)


# ---------------------------------------------------------------- long loops vs interlacements


@dataclass
class WindowObservables:
    entry: np.ndarray
    visited: np.ndarray
    d_k: np.ndarray
    local_time: np.ndarray


@dataclass
class WindowComparison:
    loops: WindowObservables
    interlacement: WindowObservables
    entry_chi2: stats.TestResult
    visited_ks: stats.TestResult
    d_k_ks: stats.TestResult
    local_time_ks: stats.TestResult
    entry_expected_chi2: stats.TestResult
    loops_generated: int


def long_loop_window_observables(config, params: ModelParams, K, n_hits: int, rng: np.random.Generator,
                                 marked: int = 0, tau: float = 10.0, d_k_cap: float = 1000.0,
                                 batch: int = 20_000, max_loops: int = 10**8) -> tuple[WindowObservables, int]:
    """Window statistics of long loops of the decomposed conditioned soup that meet ``K``.

    Long loops are drawn from the long-loop law with bases uniform over the
    grid of boxes; those meeting ``K`` are re-anchored at their canonical
    entrance. ``D_K`` is capped at ``d_k_cap``.
    """
    from .conditioned import LongWindingLaw, _axis_counts

    p0 = params.with_mu(0.0)
    K = as_sites(K, params.d)
    lk = SiteLookup.build(K)
    j_min = thermo.long_loop_threshold(p0, config.volume, config.rho_eps)
    law = LongWindingLaw.build(p0, j_min)
    boxes = config.boxes()
    lo_all = np.array([b.lo for b in boxes])
    out = {k: [] for k in ("entry", "visited", "dk", "lt")}
    got = 0
    generated = 0
    idx = lk.index.ravel()
    while got < n_hits and generated < max_loops:
        owner = rng.integers(0, len(boxes), size=batch)
        bases = lo_all[owner] + rng.integers(0, config.N, size=(batch, config.d))
        windings = law.sample(batch, rng, p0.d)
        # only loops whose base is within reach can hit K
        hit = np.zeros(batch, bool)
        counts = _axis_counts(p0, windings, rng)
        key = child_key(rng)
        ids = np.arange(batch)
        pre = _walks.loops_hit(bases, counts, p0.beta * windings.astype(float), key, ids,
                               lk.lo, lk.dims, idx)
        sel = np.flatnonzero(pre)
        generated += batch
        if len(sel) == 0:
            continue
        hit, entry, visited, dk, lt, _, _ = _walks.loop_window_stats(
            bases[sel], counts[sel], p0.beta * windings[sel].astype(float), key, ids[sel],
            lk.lo, lk.dims, idx, len(K), marked, tau)
        out["entry"].append(entry[hit])
        out["visited"].append(visited[hit])
        out["dk"].append(np.minimum(dk[hit], d_k_cap))
        out["lt"].append(lt[hit])
        got += int(hit.sum())
    obs = WindowObservables(*(np.concatenate(out[k])[:n_hits] for k in ("entry", "visited", "dk", "lt")))
    return obs, generated


def interlacement_window_observables(K, params: ModelParams, n: int, rng: np.random.Generator,
                                     eq: EquilibriumData | None = None, marked: int = 0,
                                     tau: float = 10.0, d_k_cap: float = 1000.0,
                                     r_far: float = 100.0) -> WindowObservables:
    """The same statistics for interlacement trajectories meeting ``K``; forward
    parts are run until they are ``r_far`` away from ``K``."""
    K = as_sites(K, params.d)
    lk = SiteLookup.build(K)
    if eq is None:
        eq = equilibrium_solve(K, params)
    entries = rng.choice(len(K), size=n, p=eq.normalized())
    center = np.rint(K.mean(axis=0)).astype(np.int64)
    visited, last_exit, lt, _ = _walks.forward_window_stats(
        entries, lk.lo, lk.dims, lk.index.ravel(), len(K), marked, tau, center, float(r_far),
        np.inf, child_key(rng), 0)
    return WindowObservables(entries, visited, np.minimum(last_exit, d_k_cap), lt)


def long_loop_vs_interlacement(config, K, params: ModelParams, rng: np.random.Generator,
                               n_loops: int = 10_000, n_interlacement: int | None = None,
                               marked: int = 0, tau: float = 10.0) -> WindowComparison:
    """Two-sample comparison of window observables: long loops meeting ``K``
    versus interlacement trajectories at level ``rho_eps`` meeting ``K``."""
    K = as_sites(K, params.d)
    eq = equilibrium_solve(K, params)
    a, generated = long_loop_window_observables(config, params, K, n_loops, rng, marked, tau)
    b = interlacement_window_observables(K, params, n_interlacement or n_loops, rng, eq, marked, tau)
    nK = len(K)
    ca = np.bincount(a.entry, minlength=nK)
    cb = np.bincount(b.entry, minlength=nK)
    va, vb = stats.category_counts(a.visited, b.visited)
    return WindowComparison(
        a, b,
        entry_chi2=stats.chi2(ca, cb),
        visited_ks=stats.ks_two_sample(a.visited, b.visited),
        d_k_ks=stats.ks_two_sample(a.d_k, b.d_k),
        local_time_ks=stats.ks_two_sample(a.local_time, b.local_time),
        entry_expected_chi2=stats.chi2_goodness(cb, eq.escape),
        loops_generated=generated,
    )
