r"""Transition kernels and Green's functions of the continuous-time simple
random walk on :math:`\mathbb{Z}^d`.

The walk jumps at total rate 1, i.e. at rate :math:`1/(2d)` to each
neighbour. Coordinates are then independent one-dimensional walks with
rate :math:`1/d`, and

.. math::
    p_t(x) = \prod_{i=1}^d e^{-t/d} I_{|x_i|}(t/d),

with :math:`I_n` the modified Bessel function of the first kind. The
exponentially scaled Bessel function :func:`scipy.special.ive` is used so
that no overflow occurs for large ``t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special


class DimensionError(ValueError):
    """Raised when an operation needs a transient walk (d >= 3)."""


@dataclass(frozen=True)
class ModelParams:
    """Lattice dimension, inverse temperature and chemical potential."""

    d: int
    beta: float = 1.0
    mu: float = 0.0

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d}")
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.mu > 0:
            raise ValueError(f"mu must be <= 0, got {self.mu}")

    def with_mu(self, mu: float) -> "ModelParams":
        return ModelParams(self.d, self.beta, mu)

    def require_transient(self, what: str = "this quantity") -> None:
        if self.d <= 2:
            raise DimensionError(f"{what} is infinite for the recurrent walk (d={self.d})")


def _as_sites(params: ModelParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    if x.shape[-1:] != (params.d,):
        raise ValueError(f"site has shape {x.shape}, expected trailing dimension {params.d}")
    return x


def transition_kernel(params: ModelParams, t: float, x) -> float | np.ndarray:
    """:math:`p_t(x)` for one site (shape ``(d,)``) or many (shape ``(m, d)``)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    x = np.abs(_as_sites(params, x))
    s = t / params.d
    out = np.prod(special.ive(x, s), axis=-1)
    return float(out) if out.ndim == 0 else out


def return_probability(params: ModelParams, t) -> np.ndarray | float:
    """:math:`p_t(0)`, vectorised over ``t``."""
    t = np.asarray(t, dtype=float)
    out = special.ive(0, t / params.d) ** params.d
    return float(out) if out.ndim == 0 else out


def one_dim_kernel(n, s):
    """Kernel of a rate-1 walk on Z at time ``s``: :math:`e^{-s} I_{|n|}(s)`."""
    return special.ive(np.abs(n), s)


def gaussian_kernel(params: ModelParams, t: float, x) -> float | np.ndarray:
    """Brownian transition density :math:`(2\\pi t)^{-d/2} e^{-|x|^2/2t}`."""
    if not t > 0:
        raise ValueError("t must be positive")
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1)
    out = (2 * np.pi * t) ** (-params.d / 2) * np.exp(-r2 / (2 * t))
    return float(out) if np.ndim(out) == 0 else out


def kernel_comparison(params: ModelParams, t: float) -> float:
    """Ratio :math:`p_t(0) / \\mathfrak{p}_{t/d}(0)`; tends to 1 as t grows."""
    if not t > 0:
        raise ValueError("t must be positive")
    return return_probability(params, t) / gaussian_kernel(params, t / params.d, np.zeros(params.d))


def gaussian_prefactor(params: ModelParams) -> float:
    """Constant ``c`` in :math:`p_t(0) \\sim c\\, t^{-d/2}`, namely :math:`(d/2\\pi)^{d/2}`."""
    return (params.d / (2 * np.pi)) ** (params.d / 2)


def green_asymptotic_constant(d: int) -> float:
    """Constant in :math:`G(0,x) \\sim c_d |x|^{2-d}`."""
    if d <= 2:
        raise DimensionError("no decaying Green's function for d <= 2")
    return d * math.gamma(d / 2 - 1) * math.pi ** (-d / 2) / 2


def green_asymptotic(d: int, r) -> np.ndarray:
    """Leading-order Green's function :math:`c_d r^{2-d}` at Euclidean distance ``r``."""
    r = np.asarray(r, dtype=float)
    return green_asymptotic_constant(d) * r ** (2 - d)


def occupation_tail(params: ModelParams, T: float, x=None) -> tuple[float, float]:
    r"""Estimate of :math:`\int_T^\infty p_t(x)\,dt` and a bound on its error.

    Uses the Gaussian comparison with the first correction of the Bessel
    expansion, :math:`p_t(0) \approx c\,t^{-d/2}(1 + d^2/(8t))`.
    """
    params.require_transient("the occupation tail")
    d = params.d
    c = gaussian_prefactor(params)
    r2 = 0.0 if x is None else float(np.sum(np.asarray(x, float) ** 2))
    a = d * r2 / 2.0
    k = d / 2 - 1
    if a == 0:
        lead = c * T ** (-k) / k
    else:
        # int_T^inf t^{-d/2} e^{-a/t} dt = a^{-k} gamma_lower(k, a/T)
        lead = c * a ** (-k) * special.gamma(k) * special.gammainc(k, a / T)
    corr = c * (d * d / 8.0) * T ** (-d / 2) / (d / 2)
    err = c * T ** (-d / 2) * (d * d + (1.0 + a) ** 2) / T
    return lead + corr, err


def green_function(params: ModelParams, x=None, tol: float = 1e-9, return_error: bool = False):
    r""":math:`G(0,x) = \int_0^\infty p_t(x)\,dt` for ``d >= 3``.

    The integral is split at a time ``T`` chosen from ``tol``; the finite part
    is integrated numerically and the remainder is handled by
    :func:`occupation_tail`.

    Parameters
    ----------
    params : ModelParams
    x : array_like, optional
        Target site, defaults to the origin.
    tol : float
        Requested absolute error.
    return_error : bool
        Also return the error estimate.
    """
    params.require_transient("the Green's function")
    d = params.d
    x = np.zeros(d, dtype=np.int64) if x is None else _as_sites(params, x)
    ax = np.abs(x)
    r2 = float(np.sum(ax * ax))
    # tail error ~ c T^{-d/2} (d^2 + (1+a)^2)/T, pick T so that it is below tol
    T = max(500.0, 50.0 * r2)
    c = gaussian_prefactor(params)
    while c * T ** (-d / 2) * (d * d + (1 + d * r2 / 2) ** 2) / T > tol / 2 and T < 1e8:
        T *= 2.0

    def f(t):
        return np.prod(special.ive(ax, t / d))

    breaks = [b for b in (1.0, 10.0, 100.0, r2, 10 * r2) if 0 < b < T]
    head, head_err = integrate.quad(f, 0.0, T, points=sorted(set(breaks)) or None,
                                    limit=500, epsabs=tol / 4, epsrel=1e-13)
    tail, tail_err = occupation_tail(params, T, x)
    value = head + tail
    if return_error:
        return value, head_err + tail_err
    return value


def escape_probability_origin(params: ModelParams) -> float:
    """Escape probability of the origin, :math:`1/G(0,0)`."""
    return 1.0 / green_function(params)
