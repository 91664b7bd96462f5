import math

import numpy as np
import pytest

import oracles
from loopsoup import DimensionError, ModelParams, NoSolutionError, thermo


def test_critical_density_oracle(p3):
    assert thermo.critical_density(p3) == pytest.approx(oracles.RHO_C_3D, rel=1e-10)


def test_critical_density_methods_agree(p3):
    direct = thermo.critical_density(p3, method="direct", tol=1e-10)
    acc = thermo.critical_density(p3, method="accelerated")
    assert abs(direct - acc) / acc < 1e-6


def test_critical_density_recurrent_diverges():
    with pytest.raises(DimensionError, match="diverge"):
        thermo.critical_density(ModelParams(2))


def test_critical_density_decreases_in_beta():
    assert thermo.critical_density(ModelParams(3, 100.0)) < thermo.critical_density(ModelParams(3, 1.0))


def test_rho_at_zero_is_critical(p3):
    assert thermo.rho(p3, 0.0) == thermo.critical_density(p3)


@pytest.mark.parametrize("mu, ref", [(-0.2, oracles.RHO_MU_M02), (-0.5, oracles.RHO_MU_M05)])
def test_rho_series_oracle(p3, mu, ref):
    assert thermo.rho(p3, mu) == pytest.approx(ref, rel=1e-10)


def test_rho_deep_subcritical_two_terms(p3):
    two = math.exp(-10) * oracles.return_prob(1.0) + math.exp(-20) * oracles.return_prob(2.0)
    assert abs(thermo.rho(p3, -10.0) / two - 1) < 1e-3


def test_rho_positive_mu_rejected(p3):
    with pytest.raises(ValueError):
        thermo.rho(p3, 0.5)


def test_rho_one_dimension_finite():
    assert np.isfinite(thermo.rho(ModelParams(1, 1.0, -0.5)))


def test_invert_density(p3):
    rc = thermo.critical_density(p3)
    assert thermo.invert_density(p3, rc) == 0.0
    assert thermo.invert_density(p3, thermo.rho(p3, -1.0)) == pytest.approx(-1.0, abs=1e-8)
    b = thermo.invert_density(p3, rc / 2)
    assert thermo.rho(p3, b) == pytest.approx(rc / 2, rel=1e-9)
    with pytest.raises(NoSolutionError):
        thermo.invert_density(p3, rc + 0.1)
    with pytest.raises(ValueError):
        thermo.invert_density(p3, 0.0)


def test_rate_function(p3):
    rc = thermo.critical_density(p3)
    assert thermo.rate_function(p3, rc + 0.1) == math.inf
    assert thermo.rate_function(p3, rc) == pytest.approx(0.0, abs=1e-9)
    sub = p3.with_mu(-0.3)
    x0 = thermo.rho(sub)
    assert thermo.rate_function(sub, x0) == pytest.approx(0.0, abs=1e-9)
    assert thermo.rate_function(sub, 0.5 * x0) > 0
    assert thermo.rate_function(sub, 0.0) == pytest.approx(thermo.M_mass(sub))


def test_log_mgf(p3):
    sub = p3.with_mu(-0.3)
    assert thermo.log_mgf(sub, 0.0) == 0.0
    assert thermo.log_mgf(sub, 0.31) == math.inf


def test_total_mass_oracle(p3):
    assert thermo.tail_mass(p3, 0) == pytest.approx(oracles.C2_3D, rel=1e-10)
    assert thermo.loop_mass_per_site(p3) == pytest.approx(oracles.C2_3D, rel=1e-10)


def test_tail_mass_oracle(p3):
    assert thermo.tail_mass(p3, 10_000) == pytest.approx(oracles.TAIL_MASS_1E4, rel=1e-10)
    assert thermo.tail_mass(p3, 20_000) == pytest.approx(oracles.TAIL_MASS_2E4, rel=1e-10)


def test_tail_mass_scaling(p3):
    ratio = thermo.tail_mass(p3, 20_000) / thermo.tail_mass(p3, 10_000)
    assert abs(ratio / 2 ** -1.5 - 1) < 0.03


def test_tail_constant(p3):
    n = 10**5
    assert thermo.tail_mass(p3, n) * n ** 1.5 == pytest.approx(thermo.tail_constant(p3), rel=1e-3)


def test_markov_tail_equivalence(p3):
    assert abs(thermo.tail_mass(p3, 10_000) / thermo.markov_tail_mass(p3, 10_000) - 1) < 0.05


def test_long_loop_threshold(p3):
    assert thermo.long_loop_threshold(p3, 1000, 0.5) == 501
    assert thermo.long_loop_threshold(ModelParams(3, 2.0), 1000, 0.5) == 251


def test_long_loop_mass_scaling(p3):
    z = [thermo.long_loop_mass(p3, n ** 3, 1.0) * n ** 1.5 for n in (16, 24)]
    assert abs(z[1] / z[0] - 1) < 0.10
    asym = thermo.long_loop_mass_asymptotic(p3, 24 ** 3, 1.0) * 24 ** 1.5
    assert z[1] == pytest.approx(asym, rel=0.02)


def test_return_table_read_only(p3):
    t = thermo.return_table(p3, 10)
    assert t[0] == pytest.approx(oracles.return_prob(1.0))
    with pytest.raises(ValueError):
        t[0] = 0.0


def test_thermo_report(p3):
    rep = thermo.thermo_report(p3)
    assert rep.rho_c == pytest.approx(oracles.RHO_C_3D)
    assert rep.rho_of_mu(-0.2) == pytest.approx(oracles.RHO_MU_M02)
