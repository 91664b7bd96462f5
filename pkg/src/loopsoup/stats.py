"""Statistical tests used by the experiments."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # not a pytest class

    statistic: float
    pvalue: float

    def __iter__(self):
        return iter((self.statistic, self.pvalue))


@dataclass(frozen=True)
class Dispersion:
    index: float
    ci_low: float
    ci_high: float
    mean: float
    var: float

    def __iter__(self):
        return iter((self.index, self.ci_low, self.ci_high))


def _nonempty(*arrays):
    for a in arrays:
        if len(a) == 0:
            raise ValueError("empty sample")


def poisson_dispersion(counts, level: float = 0.95) -> Dispersion:
    """Variance-to-mean ratio; the interval is the range expected under a Poisson law
    (``(n-1) * index`` is approximately chi-square with ``n-1`` degrees of freedom)."""
    counts = np.asarray(counts, dtype=float)
    _nonempty(counts)
    n = len(counts)
    if n < 2:
        raise ValueError("need at least two counts")
    m = counts.mean()
    v = counts.var(ddof=1)
    idx = v / m if m > 0 else float("nan")
    a = (1 - level) / 2
    lo = stats.chi2.ppf(a, n - 1) / (n - 1)
    hi = stats.chi2.ppf(1 - a, n - 1) / (n - 1)
    return Dispersion(float(idx), float(lo), float(hi), float(m), float(v))


def ks_two_sample(a, b) -> TestResult:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _nonempty(a, b)
    if min(len(a), len(b)) < 30:
        warnings.warn("KS p-value is approximate for small samples", stacklevel=2)
    res = stats.ks_2samp(a, b)
    return TestResult(float(res.statistic), float(res.pvalue))


def _merge_sparse(a, b, min_expected: float):
    """Pool categories (in order) until every pooled expected count reaches ``min_expected``."""
    tot = a + b
    n = tot.sum()
    fa = a.sum() / n
    groups, cur_a, cur_b = [], 0.0, 0.0
    for x, y in zip(a, b):
        cur_a += x
        cur_b += y
        if min(fa, 1 - fa) * (cur_a + cur_b) >= min_expected:
            groups.append((cur_a, cur_b))
            cur_a = cur_b = 0.0
    if cur_a + cur_b > 0:
        if groups:
            ga, gb = groups[-1]
            groups[-1] = (ga + cur_a, gb + cur_b)
        else:
            groups.append((cur_a, cur_b))
    return np.array(groups, dtype=float).T


def chi2(a, b, min_expected: float = 5.0) -> TestResult:
    """Two-sample chi-square homogeneity test on category counts ``a`` and ``b``.

    Categories with small expected counts are pooled with their neighbours.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _nonempty(a, b)
    if a.shape != b.shape:
        raise ValueError("count vectors must have the same length")
    table = _merge_sparse(a, b, min_expected)
    if table.shape[1] < 2:
        return TestResult(0.0, 1.0)
    stat, p, _, _ = stats.chi2_contingency(table, correction=False)
    return TestResult(float(stat), float(p))


def chi2_goodness(observed, expected_prob, min_expected: float = 5.0) -> TestResult:
    """One-sample chi-square test of counts against given category probabilities."""
    observed = np.asarray(observed, dtype=float)
    p = np.asarray(expected_prob, dtype=float)
    _nonempty(observed)
    n = observed.sum()
    exp = n * p / p.sum()
    # pool small expected cells
    obs_g, exp_g, co, ce = [], [], 0.0, 0.0
    for o, e in zip(observed, exp):
        co += o
        ce += e
        if ce >= min_expected:
            obs_g.append(co)
            exp_g.append(ce)
            co = ce = 0.0
    if ce > 0 and exp_g:
        obs_g[-1] += co
        exp_g[-1] += ce
    if len(obs_g) < 2:
        return TestResult(0.0, 1.0)
    res = stats.chisquare(obs_g, exp_g)
    return TestResult(float(res.statistic), float(res.pvalue))


def category_counts(a, b):
    """Counts of two integer-valued samples over their common support."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    return (np.bincount(a - lo, minlength=hi - lo + 1),
            np.bincount(b - lo, minlength=hi - lo + 1))


def mean_with_error(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    _nonempty(x)
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(len(x))) if len(x) > 1 else float("nan")
