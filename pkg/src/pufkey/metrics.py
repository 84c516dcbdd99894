"""Uniqueness of extracted bit sequences and binomial confidence intervals."""

import numpy as np
from scipy.stats import norm


def pairwise_distances(bits):
    """Fractional Hamming distance for every unordered pair of rows."""
    b = np.asarray(bits, dtype=np.uint8)
    if b.ndim != 2 or b.shape[0] < 2:
        raise ValueError("need a 2-D array with at least two devices")
    if b.shape[1] == 0:
        raise ValueError("bit sequences are empty")
    x = b.astype(np.int32)
    # d(i, j) = w_i + w_j - 2 <x_i, x_j>
    w = x.sum(axis=1)
    d = w[:, None] + w[None, :] - 2 * (x @ x.T)
    iu = np.triu_indices(b.shape[0], 1)
    return d[iu] / b.shape[1]


def uniqueness(bits):
    """``(mean, variance)`` of the pairwise fractional Hamming distances."""
    d = pairwise_distances(bits)
    return float(d.mean()), float(d.var())


def wilson_interval(errors, trials, confidence=0.95):
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    if not 0 <= errors <= trials:
        raise ValueError("errors must lie in [0, trials]")
    z = norm.isf((1 - confidence) / 2)
    p = errors / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * np.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    lo = 0.0 if errors == 0 else max(0.0, centre - half)
    hi = 1.0 if errors == trials else min(1.0, centre + half)
    return lo, hi
