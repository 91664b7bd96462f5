import math

import numpy as np
import pytest
from scipy import stats as sps

import oracles
from loopsoup import ModelParams, stats, thermo
from loopsoup.conditioned import (ConditionedConfig, InfeasibleError, LongWindingLaw, big_jump_check,
                                  big_loop_sample, conditioning_equivalence,
                                  decomposed_conditioned_sample, long_loop_hit_counts,
                                  long_loops_hitting, rejection_conditioned_batch,
                                  rejection_conditioned_sample, tilting_check, zero_truncated_poisson)
from loopsoup.lattice import ball
from loopsoup.soup import LatticeBox, exceedance_probability, mean_density


def test_config_geometry():
    c = ConditionedConfig(4, 1.0, 3, grid_side=3)
    assert c.volume == 64
    assert c.threshold == 64.0
    assert len(c.boxes()) == 27
    centre = c.boxes()[c.central_box_index()]
    assert centre.contains([[0, 0, 0]])[0]
    sites = np.concatenate([b.sites() for b in c.boxes()])
    assert len(np.unique(sites, axis=0)) == 27 * 64
    assert ConditionedConfig(16, 1.0).grid_side == round(math.log(16) * 4)
    with pytest.raises(ValueError):
        ConditionedConfig(4, 0.0)


def test_rejection_zero_threshold_is_plain_soup(rng):
    p = ModelParams(3, 1.0, -0.2)
    res = rejection_conditioned_sample(LatticeBox(6, 3), p, 0.0, rng)
    assert res.attempts == 1
    assert mean_density(res.sample) == pytest.approx(res.density)


def test_rejection_respects_threshold(p3, rng):
    box = LatticeBox(4, 3)
    rho = oracles.RHO_C_3D + 0.5
    for _ in range(20):
        res = rejection_conditioned_sample(box, p3, rho, rng)
        assert mean_density(res.sample) > rho


def test_rejection_attempts_match_exceedance(p3):
    rng = np.random.default_rng(9)
    box = LatticeBox(4, 3)
    rho = oracles.RHO_C_3D + 0.5
    attempts = np.array([rejection_conditioned_sample(box, p3, rho, rng, batch=64).attempts
                         for _ in range(3000)])
    rate = 1.0 / attempts.mean()
    # the mean of a geometric count estimates 1/p; delta method for the rate's error
    se = rate * (attempts.std(ddof=1) / math.sqrt(len(attempts))) / attempts.mean()
    ref = oracles.compound_poisson_exceedance(box.volume, 1.0, rho)
    est = exceedance_probability(box, p3, rho, 200_000, rng)
    assert abs(rate - ref) < 3 * se
    assert abs(rate - est.value) < 3 * math.hypot(se, est.stderr)


def test_rejection_infeasible(p3, rng):
    with pytest.raises(InfeasibleError) as info:
        rejection_conditioned_sample(LatticeBox(4, 3), p3, 50.0, rng, max_attempts=1000)
    assert info.value.attempts == 1000


def test_tilted_proposal_is_exact():
    # same conditioned law with and without the tilted proposal
    p = ModelParams(3, 1.0, -0.5)
    box = LatticeBox(4, 3)
    rho = thermo.rho(p) + 0.1
    rng = np.random.default_rng(12)
    _, plain, _ = rejection_conditioned_batch(box, p, rho, 5000, rng, build_loops=False)
    b = thermo.invert_density(p, rho)
    _, tilted, _ = rejection_conditioned_batch(box, p, rho, 5000, rng, proposal_mu=b, build_loops=False)
    assert stats.ks_two_sample(plain, tilted).pvalue > 0.01


def test_long_winding_law_median(p3):
    j_min = 200
    law = LongWindingLaw.build(p3, j_min)
    # oracle: weights summed far beyond the table, plus the power-law remainder
    j = np.arange(j_min, 10**6 + 1, dtype=float)
    w = oracles.return_prob(j) / j
    rest = (3 / (2 * math.pi)) ** 1.5 * (2 / 3) * (10**6 + 0.5) ** -1.5
    cdf = np.cumsum(w) / (w.sum() + rest)
    median = int(j[np.searchsorted(cdf, 0.5)])
    assert law.median() == median
    draws = law.sample(100_000, np.random.default_rng(2), 3)
    assert draws.min() >= j_min
    # distribution-free confidence band for the sample median
    lo, hi = np.quantile(draws, [0.5 - 3 * 0.5 / math.sqrt(len(draws)), 0.5 + 3 * 0.5 / math.sqrt(len(draws))])
    assert lo <= median <= hi


def test_long_winding_law_mass(p3):
    law = LongWindingLaw.build(p3, 501)
    assert law.total_mass == pytest.approx(thermo.tail_mass(p3, 500), rel=1e-10)
    assert law.tail_prob < 0.01


def test_big_loop_sample(p3, rng):
    box = LatticeBox(6, 3)
    loops = big_loop_sample(box, p3, 1.0, rng, n=200)
    assert np.all(loops.durations > 1.0 * box.volume)
    assert box.contains(loops.bases).all()


def test_zero_truncated_poisson(rng):
    k = zero_truncated_poisson(0.05, 200_000, rng)
    assert k.min() == 1
    p2 = np.mean(k >= 2)
    # P(k >= 2) = 1 - lam/(e^lam - 1), close to lam/2 for small lam
    exact = 1 - 0.05 / math.expm1(0.05)
    assert abs(p2 - exact) < 3 * math.sqrt(exact / len(k))
    assert exact == pytest.approx(0.05 / 2, rel=0.05)


def test_second_long_loop_probability_vanishes(p3):
    z = [thermo.long_loop_mass(p3, n ** 3, 1.0) for n in (6, 10, 16)]
    assert z[0] > z[1] > z[2]
    assert z[2] / 2 < 0.01


def test_decomposed_structure(p3, rng):
    cfg = ConditionedConfig(5, 1.0, 3, grid_side=3)
    s = decomposed_conditioned_sample(cfg, p3, rng)
    assert len(s.soups) == 27
    assert len(s.long_loops) == 27
    assert np.all(s.long_loops.durations > cfg.threshold)
    j_min = thermo.long_loop_threshold(p3, cfg.volume, 1.0)
    for soup in s.soups:
        assert len(soup.loops) == 0 or soup.loops.windings.max() < j_min
    boxes = cfg.boxes()
    for i, b in enumerate(s.long_box):
        assert boxes[b].contains(s.long_loops.bases[i])[0]
    g = decomposed_conditioned_sample(cfg, p3, rng, conditioning="global", with_soup=False)
    assert len(g.long_loops) == 1 and g.soups == []
    pz = decomposed_conditioned_sample(cfg, p3, rng, mode="poissonized", with_soup=False)
    assert len(pz.long_loops) >= 27
    assert pz.bias_bound == pytest.approx(pz.long_mass / 2)
    with pytest.raises(ValueError):
        decomposed_conditioned_sample(cfg, p3, rng, mode="bogus")


def test_empty_K_hits_nothing(p3, rng):
    cfg = ConditionedConfig(4, 1.0, 3, grid_side=1)
    samples = [decomposed_conditioned_sample(cfg, p3, rng, with_soup=False) for _ in range(5)]
    assert long_loops_hitting(samples, np.zeros((0, 3), np.int64)).counts.tolist() == [0] * 5


def test_hit_counts_fast_path_matches_full_samples(p3):
    cfg = ConditionedConfig(4, 1.0, 3, grid_side=3)
    K = ball(1, 3)
    rng = np.random.default_rng(6)
    fast = long_loop_hit_counts(cfg, p3, K, 4000, rng)
    slow = long_loops_hitting([decomposed_conditioned_sample(cfg, p3, rng, mode="poissonized",
                                                             with_soup=False) for _ in range(1500)], K).counts
    a, b = stats.category_counts(fast, slow)
    assert stats.chi2(a, b).pvalue > 0.01


def test_rejection_vs_decomposed_small_box(p3):
    # local time at the origin: exact conditioned soup vs its large-box decomposition
    rng = np.random.default_rng(17)
    box = LatticeBox(6, 3)
    samples, _, _ = rejection_conditioned_batch(box, p3, oracles.RHO_C_3D + 1.0, 2000, rng)
    a = np.array([s.loops.local_time_at([0, 0, 0]).sum() for s in samples])
    cfg = ConditionedConfig(6, 1.0, 3, grid_side=1)
    b = []
    for _ in range(2000):
        s = decomposed_conditioned_sample(cfg, p3, rng)
        b.append(s.soups[0].loops.local_time_at([0, 0, 0]).sum() + s.long_loops.local_time_at([0, 0, 0]).sum())
    assert stats.ks_two_sample(a, b).pvalue > 0.01


def test_tilting_supercritical_target(rng):
    p = ModelParams(3, 1.0, -0.5)
    with pytest.raises(thermo.NoSolutionError, match="interlacement"):
        tilting_check(LatticeBox(4, 3), p, 10.0, rng)


def test_tilting_round_trip():
    p = ModelParams(3, 1.0, -0.5)
    eps = 0.3 * (oracles.RHO_C_3D - oracles.RHO_MU_M05)
    b = thermo.invert_density(p, oracles.RHO_MU_M05 + eps)
    assert thermo.rho(p, b) == pytest.approx(oracles.RHO_MU_M05 + eps, rel=1e-9)


def test_tilting_small(rng):
    p = ModelParams(3, 1.0, -0.5)
    eps = 0.3 * (thermo.critical_density(p) - thermo.rho(p))
    rep = tilting_check(LatticeBox(6, 3), p, eps, rng, n_samples=2000)
    assert rep.conditioned_mean > rep.target_density
    assert rep.relative_difference < 0.1


def test_equivalence_improves_with_size(p3):
    rng = np.random.default_rng(31)
    small = conditioning_equivalence(LatticeBox(8, 3), p3, 1.0, 100_000, rng)
    large = conditioning_equivalence(LatticeBox(12, 3), p3, 1.0, 100_000, rng)
    assert large.ratio < small.ratio < 0.3
    assert large.ratio < 0.2


def test_big_jump_small():
    rep = big_jump_check(np.random.default_rng(1), n=1000, trials=100_000)
    assert 0.8 < rep.ratio < 1.2
    with pytest.raises(ValueError):
        big_jump_check(np.random.default_rng(1), alpha=1.0)


def test_pareto_kernel_distribution():
    # with n = 1 the exceedance count is a plain Pareto tail probability
    from loopsoup.conditioned import _pareto_sum_exceed
    from loopsoup.rng import key64
    alpha, level = 1.5, 3.0
    hits = _pareto_sum_exceed(1, 200_000, alpha, level, key64(4, "pareto"))
    p = (level + alpha / (alpha - 1)) ** -alpha
    assert abs(hits / 200_000 - p) < 3 * math.sqrt(p / 200_000)
    assert sps.binomtest(hits, 200_000, p).pvalue > 1e-3
