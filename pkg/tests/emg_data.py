"""Synthetic EMG histograms shared by the fit tests."""

import numpy as np
from scipy.stats import exponnorm


def expected_histogram(sigma, decay, n=100_000, t0=0.0, width=None, tail=1e-7):
    """
    Expected bin counts of `n` EMG events (no sampling noise).

    `decay` is the exponential time constant; bins default to
    ``min(sigma, decay) / 4``.
    """
    dist = exponnorm(decay / sigma, loc=t0, scale=sigma)
    width = width or min(sigma, decay) / 4
    lo, hi = dist.ppf(tail), dist.isf(tail)
    edges = lo + width * np.arange(int(np.ceil((hi - lo) / width)) + 1)
    return edges, n * np.diff(dist.cdf(edges))


def gaussian_histogram(sigma, n=100_000, t0=0.0, width=None):
    from scipy.stats import norm
    width = width or sigma / 4
    edges = t0 + width * np.arange(-int(7 * sigma / width), int(7 * sigma / width) + 1)
    return edges, n * np.diff(norm.cdf(edges, t0, sigma))


def sampled_histogram(sigma, decay, n=100_000, t0=0.0, seed=0, bins=200):
    """Histogram of `n` drawn events over the 0.1%-99.9% span plus margins."""
    rng = np.random.default_rng(seed)
    x = t0 + rng.normal(0, sigma, n) + rng.exponential(decay, n)
    lo, hi = np.quantile(x, [0.001, 0.999])
    span = hi - lo
    edges = np.linspace(lo - 0.25 * span, hi + 0.25 * span, bins + 1)
    return edges, np.histogram(x, edges)[0].astype(float)
