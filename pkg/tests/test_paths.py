import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sps

import oracles
from loopsoup import ModelParams, stats
from loopsoup.lattice import ball
from loopsoup.paths import (Loop, LoopBatch, PathSkeleton, TrajectoryWindow, canonical_rep, d_K,
                            interaction_energy, jump_count_pmf, local_time, particle_map,
                            sample_bridge, sample_loop, shift)


def _positions_at(batch: LoopBatch, t: float) -> np.ndarray:
    """Position of every loop of a batch at time ``t``."""
    owner = np.repeat(np.arange(len(batch)), np.diff(batch.offsets))
    sel = batch.times <= t
    codes = batch.steps[sel]
    out = batch.bases.copy()
    np.add.at(out, (owner[sel], codes >> 1), 1 - 2 * (codes & 1).astype(np.int64))
    return out


@pytest.fixture(scope="module")
def bridges_t4():
    p = ModelParams(3, 1.0, 0.0)
    return LoopBatch.sample(p, np.zeros((100_000, 3)), np.full(100_000, 4), np.random.default_rng(11))


def test_bridge_structure(bridges_t4):
    b = bridges_t4
    owner = np.repeat(np.arange(len(b)), np.diff(b.offsets))
    net = np.zeros((len(b), 3), np.int64)
    np.add.at(net, (owner, b.steps >> 1), 1 - 2 * (b.steps & 1).astype(np.int64))
    assert not net.any()
    assert np.all((b.times >= 0) & (b.times < 4.0))
    same = owner[1:] == owner[:-1]
    assert np.all(np.diff(b.times)[same] > 0)


def test_single_bridge_invariants(p3, rng):
    for t in (0.1, 1.0, 7.5):
        sk = sample_bridge(p3, [2, -1, 0], t, rng)
        sk.check()
        assert np.array_equal(sk.sites[0], sk.sites[-1])
        _, _, dt = sk.holding()
        assert dt.sum() == pytest.approx(t)


def test_zero_jump_bridge_is_constant(p3):
    loop = Loop.constant([1, 2, 3], 2, 1.0)
    assert loop.skeleton.n_jumps == 0
    assert np.array_equal(loop.skeleton.at([0.0, 1.5]), [[1, 2, 3], [1, 2, 3]])


def test_bridge_midpoint_law(bridges_t4):
    mid = _positions_at(bridges_t4, 2.0)
    radius = 5
    sites, prob = oracles.bridge_midpoint_law(4.0, 3, radius)
    inside = np.all(np.abs(mid) <= radius, axis=1)
    idx = np.ravel_multi_index(tuple((mid[inside] + radius).T), (2 * radius + 1,) * 3)
    observed = np.bincount(idx, minlength=len(sites)).astype(float)
    observed = np.append(observed, (~inside).sum())
    prob = np.append(prob, max(1.0 - prob.sum(), 0.0))
    assert stats.chi2_goodness(observed, prob).pvalue > 1e-3


def test_jump_count_pmf_matches_enumeration():
    assert np.allclose(jump_count_pmf(3, 2.0, 30), oracles.jump_count_law(2.0, 3, 30), atol=1e-13)


def test_jump_count_law(p3):
    b = LoopBatch.sample(p3, np.zeros((100_000, 3)), np.full(100_000, 2), np.random.default_rng(5))
    n = np.diff(b.offsets)
    law = oracles.jump_count_law(2.0, 3, 40)
    observed = np.bincount(n // 2, minlength=21)[:21].astype(float)
    assert stats.chi2_goodness(observed, law[0::2]).pvalue > 1e-3


def test_jump_times_are_uniform(bridges_t4):
    assert sps.kstest(bridges_t4.times / 4.0, "uniform").pvalue > 1e-3


def test_shift_identities(p3, rng):
    loop = sample_loop(p3, [0, 0, 0], 3, rng)
    assert shift(loop, 0.0) is loop
    full = shift(loop, 3.0)
    assert np.array_equal(full.skeleton.sites, loop.skeleton.sites)
    assert np.allclose(full.skeleton.jump_times, loop.skeleton.jump_times)


def test_shift_evaluates_ahead(p3, rng):
    loop = sample_loop(p3, [0, 0, 0], 2, rng)
    s = 0.7
    sh = shift(loop, s)
    t = rng.uniform(0, 2, 50)
    assert np.array_equal(sh.skeleton.at(t), loop.skeleton.at((t + s) % 2))
    sh.skeleton.check()


def test_local_time_shift_invariant(p3, rng):
    for _ in range(100):
        j = int(rng.integers(1, 6))
        loop = sample_loop(p3, [0, 0, 0], j, rng)
        s = rng.uniform(0, j)
        sh = shift(loop, s)
        for x in ([0, 0, 0], [1, 0, 0], [0, -1, 0]):
            assert local_time(sh, x) == pytest.approx(local_time(loop, x), abs=1e-12)


def test_local_time_constant_loop():
    loop = Loop.constant([1, 1, 1], 1, 0.5)
    assert local_time(loop, [1, 1, 1]) == 0.5
    assert local_time(loop, [0, 1, 1]) == 0.0


def test_mean_local_time_at_base(p3):
    b = LoopBatch.sample(p3, np.zeros((40_000, 3)), np.ones(40_000, np.int64), np.random.default_rng(8))
    lt = b.local_time_at([0, 0, 0])
    m, se = lt.mean(), lt.std(ddof=1) / math.sqrt(len(lt))
    assert abs(m - oracles.BRIDGE_LOCAL_TIME_3D) < 3 * se


def test_batch_local_time_matches_loop_view(p3, rng):
    b = LoopBatch.sample(p3, rng.integers(-2, 3, (50, 3)), rng.integers(1, 5, 50), rng)
    lt = b.local_time_at([0, 0, 0])
    assert np.allclose(lt, [local_time(loop, [0, 0, 0]) for loop in b])
    owner, sites, start, dt = b.holding()
    assert np.allclose(np.bincount(owner, weights=dt, minlength=len(b)), b.durations)


def test_d_K_trivial_cases(p3, rng):
    inside = Loop.constant([0, 0, 0], 3)
    assert d_K(inside, [[0, 0, 0]]) == 3.0
    assert d_K(inside, [[5, 5, 5]]) == 0.0
    loop = sample_loop(p3, [0, 0, 0], 2, rng)
    assert 0 < d_K(loop, ball(1, 3)) <= 2.0


def test_d_K_rotation_invariant(p3, rng):
    K = ball(1, 3)
    for _ in range(100):
        loop = sample_loop(p3, [0, 0, 0], int(rng.integers(1, 8)), rng)
        s = rng.uniform(0, loop.duration)
        assert d_K(shift(loop, s), K) == pytest.approx(d_K(loop, K), abs=1e-9)


def test_canonical_rep(p3, rng):
    K = ball(1, 3)
    for _ in range(50):
        loop = sample_loop(p3, [0, 0, 0], int(rng.integers(1, 6)), rng)
        c = canonical_rep(loop, K)
        assert np.abs(c.base).sum() <= 1
        # the avoiding stretch fills [D_K, duration); the closing jump sits at the period end
        dk = d_K(loop, K)
        sites, starts, dt = c.skeleton.holding()
        inK = np.abs(sites).sum(axis=1) <= 1
        tail = (starts >= dk - 1e-9) & (dt > 1e-9)
        assert not inK[tail].any()
        assert dt[tail].sum() == pytest.approx(loop.duration - dk, abs=1e-9)
        # the representative does not depend on the rotation of the input
        # (unique when the loop leaves K; a loop confined to K has no preferred entrance)
        if dk >= loop.duration:
            continue
        c2 = canonical_rep(shift(loop, rng.uniform(0, loop.duration)), K)
        assert np.array_equal(c2.skeleton.sites, c.skeleton.sites)
        assert np.allclose(c2.skeleton.jump_times, c.skeleton.jump_times, atol=1e-9)


def test_canonical_rep_needs_intersection():
    with pytest.raises(ValueError):
        canonical_rep(Loop.constant([4, 4, 4]), [[0, 0, 0]])


def test_particle_map_constant_loops(rng):
    K = [[0, 0, 0], [1, 0, 0]]
    assert particle_map([Loop.constant([1, 0, 0], 1)], K, rng).tolist() == [[1, 0, 0]]
    out = particle_map([Loop.constant([0, 0, 0], 4)], K, rng)
    assert out.tolist() == [[0, 0, 0]] * 4
    assert len(particle_map([Loop.constant([3, 0, 0], 2)], K, rng)) == 0


def test_particle_map_counts_windings_inside_K(rng):
    # loops confined to K: a 1d-like loop hopping between two sites of K
    K = [[0, 0, 0], [1, 0, 0]]
    sites = np.array([[0, 0, 0], [1, 0, 0], [0, 0, 0], [1, 0, 0], [0, 0, 0]])
    loop = Loop(3, 1.0, PathSkeleton(sites, np.array([0.4, 1.1, 1.9, 2.5]), 3.0))
    out = particle_map([loop, Loop.constant([0, 0, 0], 2)], K, rng)
    assert len(out) == 5


def test_particle_map_rotation_invariance(p3):
    K = ball(1, 3)
    rng = np.random.default_rng(3)
    b = LoopBatch.sample(p3, np.zeros((10_000, 3)), np.full(10_000, 3), rng)
    loops = list(b)
    plain = np.array([len(particle_map([lp], K, rng)) for lp in loops])
    rotated = np.array([len(particle_map([shift(lp, 1.234)], K, rng)) for lp in loops])
    a, c = stats.category_counts(plain, rotated)
    assert stats.chi2(a, c).pvalue > 1e-3


def test_particle_map_trajectory_window(rng):
    fwd = PathSkeleton(np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]]), np.array([0.5, 1.5]), 4.0)
    bwd = PathSkeleton(np.array([[0, 0, 0], [-1, 0, 0]]), np.array([0.25]), 3.0)
    w = TrajectoryWindow(np.array([[0, 0, 0]]), np.zeros(3, np.int64), fwd, bwd)
    out = particle_map([w], [[0, 0, 0], [1, 0, 0]], rng, beta=1.0)
    assert 1 <= len(out) <= 2
    with pytest.raises(ValueError):
        particle_map([w], [[0, 0, 0]], rng)


def _v_exp(r):
    return np.exp(-np.asarray(r))


def test_interaction_zero_potential(p3, rng):
    loops = [sample_loop(p3, [0, 0, 0], 3, rng), sample_loop(p3, [1, 0, 0], 2, rng)]
    assert interaction_energy(loops, lambda r: np.zeros_like(r)) == 0.0


def test_interaction_single_winding_one_loop(p3, rng):
    assert interaction_energy([sample_loop(p3, [0, 0, 0], 1, rng)], _v_exp) == 0.0


def test_interaction_two_constant_loops():
    x, y = Loop.constant([0, 0, 0], 1, 0.7), Loop.constant([3, 4, 0], 1, 0.7)
    assert interaction_energy([x, y], _v_exp) == pytest.approx(0.7 * math.exp(-5.0))
    assert interaction_energy([x, y], _v_exp) == pytest.approx(oracles.interaction_by_time_grid([x, y], _v_exp, 0.7))


def test_interaction_time_grid_oracle(p3):
    rng = np.random.default_rng(21)
    for _ in range(5):
        loops = [sample_loop(p3, [0, 0, 0], 2, rng), sample_loop(p3, [1, 0, 0], 3, rng),
                 sample_loop(p3, [0, 1, 0], 1, rng)]
        exact = interaction_energy(loops, _v_exp)
        grid = oracles.interaction_by_time_grid(loops, _v_exp, 1.0, n_grid=40_000)
        assert exact == pytest.approx(grid, rel=2e-3)


def test_interaction_shift_invariant_for_full_slots(p3, rng):
    loops = [sample_loop(p3, [0, 0, 0], 2, rng), sample_loop(p3, [1, 0, 0], 3, rng)]
    e = interaction_energy(loops, _v_exp)
    rotated = [shift(loops[0], 1.0), shift(loops[1], 2.0)]
    assert interaction_energy(rotated, _v_exp) == pytest.approx(e)


def test_interaction_hard_core():
    def hard(r):
        return np.where(np.asarray(r) == 0, np.inf, 0.0)
    a, b = Loop.constant([0, 0, 0]), Loop.constant([0, 0, 0])
    assert interaction_energy([a, b], hard) == math.inf
    assert interaction_energy([a, Loop.constant([1, 0, 0])], hard) == 0.0


def test_interaction_restricted_to_K():
    x, y, z = Loop.constant([0, 0, 0]), Loop.constant([1, 0, 0]), Loop.constant([5, 0, 0])
    K = [[0, 0, 0], [1, 0, 0]]
    full = interaction_energy([x, y, z], _v_exp)
    inside = interaction_energy([x, y, z], _v_exp, K=K)
    assert inside == pytest.approx(math.exp(-1.0))
    assert full > inside
    # time-integral variant: half the double integral over pairs of distinct paths
    assert interaction_energy([x, y, z], _v_exp, K=K, kind="time") == pytest.approx(0.5 * math.exp(-1.0))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), winding=st.integers(1, 6), frac=st.floats(0, 1, exclude_max=True))
def test_shift_preserves_occupation(seed, winding, frac):
    p = ModelParams(3)
    rng = np.random.default_rng(seed)
    loop = sample_loop(p, [0, 0, 0], winding, rng)
    sh = shift(loop, frac * loop.duration)
    sh.skeleton.check()
    assert np.array_equal(sh.skeleton.sites[0], sh.skeleton.sites[-1])
    sites, _, dt = loop.skeleton.holding()
    for x in np.unique(sites, axis=0)[:5]:
        assert local_time(sh, x) == pytest.approx(local_time(loop, x), abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), windings=st.lists(st.integers(1, 5), min_size=1, max_size=4))
def test_particle_count_for_loops_in_K(seed, windings):
    rng = np.random.default_rng(seed)
    K = ball(30, 3)
    p = ModelParams(3)
    loops = [sample_loop(p, [0, 0, 0], j, rng) for j in windings]
    # bridges this short essentially never leave a ball of radius 30
    assert len(particle_map(loops, K, rng)) == sum(windings)
