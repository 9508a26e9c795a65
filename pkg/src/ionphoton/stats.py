"""Small-count statistics helpers: exact binomial intervals and Poisson
upper limits with known background."""

from __future__ import annotations

import numpy as np
import scipy.optimize
import scipy.stats

from .errors import ConfigError


def clopper_pearson(k, n, level=0.95):
    """Exact two-sided binomial confidence interval for k successes of n."""
    if n <= 0:
        raise ConfigError("need n > 0 trials")
    if not 0 <= k <= n:
        raise ConfigError(f"count k={k} outside [0, {n}]")
    alpha = 1.0 - level
    lo = 0.0 if k == 0 else float(scipy.stats.beta.ppf(alpha / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(scipy.stats.beta.ppf(1 - alpha / 2, k + 1, n - k))
    return lo, hi


def binomial_upper_bound(k, n, level=0.95):
    """One-sided exact upper confidence bound on a binomial probability."""
    if n <= 0:
        raise ConfigError("need n > 0 trials")
    if k == n:
        return 1.0
    return float(scipy.stats.beta.ppf(level, k + 1, n - k))


def binomial_se(k, n):
    """Plain binomial standard error of k/n (Wald)."""
    p = k / n
    return float(np.sqrt(max(p * (1.0 - p), 0.0) / n))


def poisson_upper_limit(observed, background, level=0.95):
    """One-sided upper limit on a Poisson signal mean with known background.

    Returns the largest signal s >= 0 such that P(X <= observed | b + s)
    >= 1 - level; 0 when even s = 0 is excluded (strong deficit).
    """
    if background < 0:
        raise ConfigError("background must be >= 0")
    observed = int(observed)
    alpha = 1.0 - level

    def excess(s):
        return scipy.stats.poisson.cdf(observed, background + s) - alpha

    if excess(0.0) <= 0.0:
        return 0.0
    hi = max(10.0, 2.0 * (observed - background + 10.0 * np.sqrt(observed + 1.0)))
    while excess(hi) > 0.0:
        hi *= 2.0
    return float(scipy.optimize.brentq(excess, 0.0, hi, xtol=1e-12, rtol=1e-12))
