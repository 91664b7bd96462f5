import math

import numpy as np
import pytest
from scipy import integrate

import oracles
from loopsoup import ModelParams, stats
from loopsoup.conditioned import ConditionedConfig
from loopsoup.interlacements import (avoidance_check, default_horizon, equilibrium_mc,
                                     equilibrium_solve, hitting_asymptotics_check,
                                     interlacement_window_observables, long_loop_vs_interlacement,
                                     return_after_horizon_bound, sample_interlacements, trajectory_hits)
from loopsoup.kernels import transition_kernel
from loopsoup.lattice import SiteLookup, ball, point


@pytest.fixture(scope="module")
def eq_point():
    return equilibrium_solve(point(3), ModelParams(3))


@pytest.fixture(scope="module")
def eq_ball():
    return equilibrium_solve(ball(1, 3), ModelParams(3))


def test_point_escape_probability(eq_point):
    assert abs(eq_point.escape[0] / oracles.ESCAPE_3D - 1) < 0.005
    assert eq_point.capacity == pytest.approx(eq_point.escape[0])
    assert eq_point.error < 0.005


def test_ball_equilibrium_symmetry(eq_ball):
    K = eq_ball.window
    centre = np.all(K == 0, axis=1)
    # the centre is shielded by its neighbours
    assert eq_ball.escape[centre][0] < 1e-6
    outer = eq_ball.escape[~centre]
    assert np.allclose(outer, outer[0], rtol=1e-8)
    assert eq_ball.normalized().sum() == pytest.approx(1.0)


def test_two_point_decoupling(p3, eq_point):
    K = np.array([[0, 0, 0], [50, 0, 0]])
    cap = equilibrium_solve(K, p3).capacity
    assert abs(cap / (2 * eq_point.capacity) - 1) < 0.02


def test_capacity_monotone(p3, eq_point, eq_ball):
    assert eq_point.capacity < eq_ball.capacity
    assert equilibrium_solve(ball(2, 3), p3).capacity > eq_ball.capacity


@pytest.mark.parametrize("shape", ["point", "ball"])
def test_solve_vs_monte_carlo(p3, shape, eq_point, eq_ball):
    sol = eq_point if shape == "point" else eq_ball
    mc = equilibrium_mc(sol.window, p3, 100_000, 10.0, np.random.default_rng(1))
    assert abs(sol.capacity - mc.capacity) <= 3 * math.hypot(sol.error, mc.error)


def test_monte_carlo_radius_stability(p3):
    a = equilibrium_mc(point(3), p3, 100_000, 10.0, np.random.default_rng(2))
    b = equilibrium_mc(point(3), p3, 100_000, 20.0, np.random.default_rng(3))
    assert abs(a.capacity - b.capacity) < 3 * math.hypot(a.error, b.error)


def test_zero_level_is_empty(p3, eq_point, rng):
    for _ in range(10):
        assert len(sample_interlacements(point(3), 0.0, p3, rng, eq=eq_point)) == 0


def test_trajectory_structure(p3, eq_ball, rng):
    K = eq_ball.window
    lk = SiteLookup.build(K)
    s = sample_interlacements(K, 3.0, p3, rng, eq=eq_ball)
    assert s.horizons == (default_horizon(K), default_horizon(K))
    assert s.residual_bound == pytest.approx(return_after_horizon_bound(p3, K, default_horizon(K)))
    for tr in s.trajectories:
        tr.forward.check()
        tr.backward.check()
        assert lk.contains(tr.entry)[0]
        assert np.array_equal(tr.at(np.array([0.0]))[0], tr.entry)
        # the past never comes back to K after leaving its entry point
        assert not lk.contains(tr.backward.sites[1:]).any()
        assert trajectory_hits(tr, K)


def test_count_is_poisson(p3, eq_point):
    rng = np.random.default_rng(5)
    counts = np.array([len(sample_interlacements(point(3), 2.0, p3, rng, eq=eq_point))
                       for _ in range(10_000)])
    disp = stats.poisson_dispersion(counts)
    assert 0.9 <= disp.index <= 1.1
    assert abs(counts.mean() - 2.0 * eq_point.capacity) < 3 * math.sqrt(2.0 * eq_point.capacity / 1e4)


def test_entry_law_is_normalized_equilibrium(p3, eq_ball):
    rng = np.random.default_rng(6)
    K = eq_ball.window
    lk = SiteLookup.build(K)
    entries = []
    for _ in range(400):
        s = sample_interlacements(K, 5.0, p3, rng, eq=eq_ball, horizons=(1.0, 1.0))
        entries += [int(lk.find(t.entry)[0]) for t in s.trajectories]
    observed = np.bincount(entries, minlength=len(K))
    keep = eq_ball.escape > 0
    assert observed[~keep].sum() == 0
    assert stats.chi2_goodness(observed[keep], eq_ball.normalized()[keep]).pvalue > 0.01


@pytest.mark.parametrize("u", [0.5, 1.0])
def test_avoidance_counts(p3, eq_point, u):
    rep = avoidance_check(point(3), u, p3, 10_000, np.random.default_rng(7), eq=eq_point)
    assert abs(rep.z_score) <= 3


def test_avoidance_path_level(p3, eq_point):
    # trajectories through the ball, checked for visits to its centre
    rep = avoidance_check(point(3), 1.0, p3, 2000, np.random.default_rng(8), eq=eq_point, outer=ball(1, 3))
    assert abs(rep.z_score) <= 3


def test_hitting_oracle_trend():
    # exact window probabilities move towards the prediction as |x| grows
    ratios = {}
    for r, prob in oracles.HIT_WINDOW_3D.items():
        x = np.array([r, 0, 0])
        pred, _ = integrate.quad(lambda t: transition_kernel(ModelParams(3), t, x), r * r / 2, 2 * r * r,
                                 epsrel=1e-10)
        ratios[r] = prob / (oracles.ESCAPE_3D * pred)
    assert ratios[5] > ratios[10] > ratios[20] > 1
    assert abs(ratios[20] - 1) < 0.10


def test_hitting_oracle_frozen():
    assert oracles.hitting_window_probability([5, 0, 0], 12.5, 50.0) == pytest.approx(
        oracles.HIT_WINDOW_3D[5], rel=1e-9)


def test_hitting_monte_carlo_vs_exact(p3, eq_point):
    x = np.array([10, 0, 0])
    rep = hitting_asymptotics_check(point(3), [0, 0, 0], x, (50.0, 200.0), 1_000_000, p3,
                                    np.random.default_rng(9), eq=eq_point)
    assert abs(rep.estimate - oracles.HIT_WINDOW_3D[10]) < 3 * rep.stderr * rep.prediction
    assert abs(rep.ratio - 1) < 0.10


def test_hitting_needs_z_in_K(p3, rng):
    with pytest.raises(ValueError):
        hitting_asymptotics_check(point(3), [1, 0, 0], [5, 0, 0], (1.0, 2.0), 10, p3, rng)


def test_interlacement_window_entries(p3, eq_ball):
    obs = interlacement_window_observables(ball(1, 3), p3, 20_000, np.random.default_rng(10), eq=eq_ball)
    keep = eq_ball.escape > 0
    counts = np.bincount(obs.entry, minlength=len(eq_ball.window))
    assert stats.chi2_goodness(counts[keep], eq_ball.normalized()[keep]).pvalue > 0.01
    assert np.all(obs.visited >= 1) and np.all(obs.visited <= 7)


def test_long_loops_vs_interlacement_small(p3):
    cfg = ConditionedConfig(8, 1.0, 3, grid_side=3)
    cmp = long_loop_vs_interlacement(cfg, ball(1, 3), p3, np.random.default_rng(11), n_loops=1000)
    assert len(cmp.loops.entry) == 1000
    assert cmp.entry_chi2.pvalue > 0.01
    assert cmp.visited_ks.pvalue > 0.01
    assert cmp.entry_expected_chi2.pvalue > 0.01
