r"""Thermodynamics of the free Bose gas expressed through loop-measure masses.

All quantities are series over the winding number :math:`j \ge 1` of the
return probabilities :math:`p_{\beta j}(0)`:

.. math::
    \rho(\mu) = \beta \sum_j e^{\beta\mu j} p_{\beta j}(0), \qquad
    M(\mu) = \sum_j \frac{e^{\beta\mu j}}{j} p_{\beta j}(0),

with :math:`\rho_c = \rho(0)` and :math:`c_2 = M(0)`. Tails of the series at
:math:`\mu = 0` are summed through the large-time expansion of the Bessel
kernel and Hurwitz zeta functions.

Infinite values (the rate function above the critical density, the log
moment generating function beyond :math:`-\mu`) are returned as
``math.inf``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate, special

from .kernels import DimensionError, ModelParams, gaussian_prefactor, return_probability


class NoSolutionError(ValueError):
    """Raised when a density exceeds what any chemical potential can produce."""


@lru_cache(maxsize=32)
def _return_table(d: int, beta: float, n: int) -> np.ndarray:
    j = np.arange(1, n + 1, dtype=float)
    out = special.ive(0, beta * j / d) ** d
    out.setflags(write=False)
    return out


def return_table(params: ModelParams, n: int) -> np.ndarray:
    """``p_{beta j}(0)`` for ``j = 1..n`` (read-only, cached)."""
    return _return_table(params.d, float(params.beta), int(n))


def _bessel_expansion_coeffs(d: int, order: int = 4) -> np.ndarray:
    """Coefficients e_k with p_t(0) = (2 pi s)^{-d/2} sum_k e_k s^{-k}, s = t/d."""
    a = np.array([math.prod(range(1, 2 * k, 2)) ** 2 / (math.factorial(k) * 8.0 ** k)
                  for k in range(order)])
    out = np.zeros(order)
    out[0] = 1.0
    for _ in range(d):
        out = np.convolve(out, a)[:order]
    return out


def _expansion_terms(params: ModelParams, order: int = 4):
    """Pairs (coefficient, power) with p_{beta j}(0) ~ sum coef * j^{-power}."""
    d, beta = params.d, params.beta
    e = _bessel_expansion_coeffs(d, order)
    pre = (2 * np.pi * beta / d) ** (-d / 2)
    return [(pre * e[k] * (beta / d) ** (-k), d / 2 + k) for k in range(order)]


def _expansion_tail(params: ModelParams, start: int, extra_power: float = 0.0, order: int = 4):
    """sum_{j >= start} j^{-extra} * (asymptotic expansion of p_{beta j}(0)), with error bound."""
    terms = _expansion_terms(params, order + 1)
    total = sum(c * special.zeta(s + extra_power, start) for c, s in terms[:order])
    c, s = terms[order]
    return total, abs(c * special.zeta(s + extra_power, start))


def critical_density(params: ModelParams, tol: float = 1e-12, method: str = "accelerated") -> float:
    r""":math:`\rho_c = \beta \sum_{j\ge 1} p_{\beta j}(0)`.

    ``method="direct"`` sums the Bessel products exactly up to a cutoff and
    adds the leading Gaussian tail :math:`c\,\zeta(d/2, J+1)`, choosing the
    cutoff so that the first neglected correction is below ``tol``.
    ``method="accelerated"`` subtracts a four-term large-``j`` expansion from
    every term and adds it back in closed form through zeta values.
    """
    if params.d <= 2:
        raise DimensionError(f"critical density series diverges for d={params.d}")
    beta = params.beta
    if method == "direct":
        (c0, s0), (c1, s1) = _expansion_terms(params, 2)
        J = 1000
        while beta * abs(c1) * special.zeta(s1, J + 1) > tol and J < 10**8:
            J *= 2
        head = 0.0
        for lo in range(1, J + 1, 1 << 20):
            j = np.arange(lo, min(lo + (1 << 20), J + 1), dtype=float)
            head += np.sum(special.ive(0, beta * j / params.d) ** params.d)
        return float(beta * (head + c0 * special.zeta(s0, J + 1)))
    if method == "accelerated":
        J = 2000
        p = return_table(params, J)
        j = np.arange(1, J + 1, dtype=float)
        terms = _expansion_terms(params, 4)
        expansion = sum(c * j ** (-s) for c, s in terms)
        # remainder sum_{j>J} (p_j - expansion_j) is O(J^{-d/2-4})
        closed = sum(c * special.zeta(s, 1) for c, s in terms)
        return float(beta * (np.sum(p - expansion) + closed))
    raise ValueError(f"unknown method {method!r}")


def _geometric_sum(params: ModelParams, mu: float, power: int, tol: float) -> float:
    """sum_j e^{beta mu j} j^{-power} p_{beta j}(0) for mu < 0."""
    q = math.exp(params.beta * mu)
    # p_{beta j}(0) <= 1, so the tail after J is below q^{J+1}/(1-q)
    J = 16
    while q ** (J + 1) / (1 - q) > tol and J < 10**7:
        J *= 2
    j = np.arange(1, J + 1, dtype=float)
    return float(np.sum(np.exp(params.beta * mu * j) * return_table(params, J) / j ** power))


def _check_mu(mu: float) -> None:
    if mu > 0:
        raise ValueError(f"mu must be <= 0, got {mu}")


def rho(params: ModelParams, mu: float | None = None, tol: float = 1e-12) -> float:
    """Mean density :math:`\\rho(\\mu)`; ``mu`` defaults to ``params.mu``."""
    mu = params.mu if mu is None else mu
    _check_mu(mu)
    if mu == 0:
        return critical_density(params, tol)
    return params.beta * _geometric_sum(params, mu, 0, tol / params.beta)


def M_mass(params: ModelParams, mu: float | None = None, tol: float = 1e-12) -> float:
    """Loop mass per site :math:`M(\\mu)`; finite for every ``d`` at ``mu <= 0``."""
    mu = params.mu if mu is None else mu
    _check_mu(mu)
    if mu == 0:
        return _tail_sum(params, 0)
    return _geometric_sum(params, mu, 1, tol)


def loop_mass_per_site(params: ModelParams) -> float:
    """:math:`c_2 = M(0)`."""
    return M_mass(params, 0.0)


def invert_density(params: ModelParams, x: float, tol: float = 1e-12) -> float:
    """Chemical potential :math:`b(x)` with :math:`\\rho(b(x)) = x`.

    Bisection on ``[mu_lo, 0]``; ``mu_lo`` is found by doubling.
    """
    if not x > 0:
        raise ValueError("density must be positive")
    rc = critical_density(params) if params.d >= 3 else math.inf
    if x > rc:
        raise NoSolutionError(f"density {x} exceeds the critical density {rc}")
    if x == rc:
        return 0.0
    lo = -1.0
    while rho(params, lo) > x:
        lo *= 2
        if lo < -1e6:
            raise NoSolutionError("density too small to invert")
    hi = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        r = rho(params, mid) if mid < 0 else rc
        if r > x:
            hi = mid
        else:
            lo = mid
        if abs(r - x) < tol:
            return mid
    return 0.5 * (lo + hi)


def log_mgf(params: ModelParams, t: float) -> float:
    """:math:`\\phi(t) = M(\\mu+t) - M(\\mu)` for ``t <= -mu``, else ``inf``."""
    mu = params.mu
    if t > -mu:
        return math.inf
    return M_mass(params, min(mu + t, 0.0)) - M_mass(params, mu)


def rate_function(params: ModelParams, x: float) -> float:
    """Large-deviation rate function of the mean density.

    ``M(mu)`` at ``x = 0``; the Legendre form ``x(b(x)-mu) - M(b(x)) + M(mu)``
    on ``(0, rho_c]``; ``inf`` above ``rho_c`` and for negative ``x``.
    """
    mu = params.mu
    if x < 0:
        return math.inf
    if x == 0:
        return M_mass(params, mu)
    rc = critical_density(params) if params.d >= 3 else math.inf
    if x > rc:
        return math.inf
    b = invert_density(params, x)
    return x * (b - mu) - M_mass(params, b) + M_mass(params, mu)


def tail_mass(params: ModelParams, n: int) -> float:
    r"""Mass of loops rooted at the origin with winding above ``n``:
    :math:`\sum_{j>n} p_{\beta j}(0)/j` at :math:`\mu = 0`.

    Exact terms are summed up to ``n + 2000``; the rest uses the asymptotic
    expansion (truncation error far below double precision there).
    """
    if params.mu != 0:
        raise ValueError("tail_mass is defined at mu = 0")
    params.require_transient("the long-loop tail asymptotics")
    if n < 0:
        raise ValueError("n must be nonnegative")
    return _tail_sum(params, int(n))


def _tail_sum(params: ModelParams, n: int) -> float:
    J = int(n) + 2000
    p = return_table(params, J)[n:]
    j = np.arange(n + 1, J + 1, dtype=float)
    rest, _ = _expansion_tail(params, J + 1, extra_power=1.0)
    return float(np.sum(p / j) + rest)


def tail_constant(params: ModelParams) -> float:
    r"""Constant ``C`` in ``tail_mass(n) ~ C n^{-d/2}``:
    :math:`C = (2/d)(d/2\pi\beta)^{d/2}`."""
    return (2.0 / params.d) * gaussian_prefactor(params) * params.beta ** (-params.d / 2)


def markov_tail_mass(params: ModelParams, n: float) -> float:
    r""":math:`\int_{\beta n}^\infty t^{-1} p_t(0)\,dt`, the Markovian-loop analogue of
    :func:`tail_mass`."""
    params.require_transient("the Markovian tail")
    a = params.beta * n
    T = max(10 * a, 1e4)
    head, _ = integrate.quad(lambda t: return_probability(params, t) / t, a, T, limit=400,
                             epsrel=1e-12)
    d = params.d
    c = gaussian_prefactor(params)
    e = _bessel_expansion_coeffs(d, 3)
    tail = sum(c * e[k] * d ** k * T ** (-(d / 2 + k)) / (d / 2 + k) for k in range(3))
    return float(head + tail)


def long_loop_threshold(params: ModelParams, volume: int, rho_eps: float) -> int:
    """Smallest winding ``j`` with ``beta j > rho_eps * volume``."""
    return int(math.floor(rho_eps * volume / params.beta)) + 1


def long_loop_mass(params: ModelParams, volume: int, rho_eps: float) -> float:
    r"""Mass :math:`Z_\Lambda = M_\Lambda[A_\Lambda]` of loops rooted in a box of
    ``volume`` sites with length above ``rho_eps * volume``."""
    return volume * tail_mass(params.with_mu(0.0), long_loop_threshold(params, volume, rho_eps) - 1)


def long_loop_mass_asymptotic(params: ModelParams, volume: int, rho_eps: float) -> float:
    """Leading-order :func:`long_loop_mass`: ``C rho_eps^{-d/2} volume^{1-d/2}`` times beta powers."""
    d = params.d
    return tail_constant(params) * (rho_eps / params.beta) ** (-d / 2) * volume ** (1 - d / 2)


@dataclass(frozen=True)
class ThermoReport:
    rho_c: float
    c2: float
    rho_of_mu: Callable[[float], float]
    M_of_mu: Callable[[float], float]


def thermo_report(params: ModelParams) -> ThermoReport:
    rc = critical_density(params) if params.d >= 3 else math.inf
    return ThermoReport(
        rho_c=rc,
        c2=M_mass(params, 0.0),
        rho_of_mu=lambda mu: rho(params, mu),
        M_of_mu=lambda mu: M_mass(params, mu),
    )
