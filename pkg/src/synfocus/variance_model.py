"""Closed-form occlusion statistics of integral images, with a sampling oracle.

The pixel model: each single-view pixel is either occluded (probability d)
and shows an occluder value with mean mu_o / variance sigma2_o, or shows the
scene signal with mean mu_s / variance sigma2_s. Integrating n views averages
n such realizations in which the occlusion indicators and occluder values are
independent per view while the signal value is one draw shared by all views
of the same pixel (the scene does not change between views).

Closed forms:

    var_single = d (1 - d) (mu_o - mu_s)^2 + d sigma2_o + (1 - d) sigma2_s
    var_integral(n) = var_single / n + (1 - d)^2 (1 - 1/n) sigma2_s

monte_carlo_integral simulates the generative model directly and is the
independent check of both formulas.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

_BLOCK_PIXELS = 1 << 16


@dataclass(frozen=True)
class OcclusionStats:
    """Per-pixel occlusion probability and the two intensity distributions."""

    d: float
    mu_o: float
    sigma2_o: float
    mu_s: float
    sigma2_s: float

    def __post_init__(self):
        if not 0.0 <= self.d <= 1.0:
            raise ValueError("occlusion probability d must lie in [0, 1]")
        if self.sigma2_o < 0.0 or self.sigma2_s < 0.0:
            raise ValueError("variances must be nonnegative")


@dataclass(frozen=True)
class ModelMoments:
    """First and second moment plus the implied variance of a pixel value."""

    mean: float
    second_moment: float
    variance: float


def var_single(stats: OcclusionStats) -> float:
    """Variance of one single-view pixel."""
    d = stats.d
    return (
        d * (1.0 - d) * (stats.mu_o - stats.mu_s) ** 2
        + d * stats.sigma2_o
        + (1.0 - d) * stats.sigma2_s
    )


def var_integral(stats: OcclusionStats, n: int) -> float:
    """Variance of an integral pixel averaged from n views."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return var_single(stats) / n + (1.0 - stats.d) ** 2 * (1.0 - 1.0 / n) * stats.sigma2_s


def model_moments(stats: OcclusionStats, n: int) -> ModelMoments:
    """Mean, second moment and variance of an integral pixel from n views.

    The second moment is evaluated termwise; the variance it implies equals
    var_integral to floating point accuracy.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    d = stats.d
    mean = d * stats.mu_o + (1.0 - d) * stats.mu_s
    per_view = d * (stats.sigma2_o + stats.mu_o**2) + (1.0 - d) * (stats.sigma2_s + stats.mu_s**2)
    cross = (
        d**2 * stats.mu_o**2
        + 2.0 * d * (1.0 - d) * stats.mu_s * stats.mu_o
        + (1.0 - d) ** 2 * (stats.sigma2_s + stats.mu_s**2)
    )
    second = (n * per_view + n * (n - 1) * cross) / n**2
    return ModelMoments(mean=mean, second_moment=second, variance=second - mean**2)


def _simulate_block(stats: OcclusionStats, n: int, count: int, seed_seq) -> np.ndarray:
    """Power sums (count, sum x, sum x^2, sum x^3, sum x^4) for one pixel block."""
    rng = np.random.default_rng(seed_seq)
    occluded = rng.random((n, count)) < stats.d
    occ_values = rng.normal(stats.mu_o, np.sqrt(stats.sigma2_o), size=(n, count))
    signal = rng.normal(stats.mu_s, np.sqrt(stats.sigma2_s), size=count)
    views = np.where(occluded, occ_values, signal[None, :])
    x = views.mean(axis=0)
    return np.array(
        [float(count), x.sum(), (x**2).sum(), (x**3).sum(), (x**4).sum()]
    )


def _power_sums(stats: OcclusionStats, n: int, num_pixels: int, seed: int,
                workers: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be at least 1")
    if num_pixels < 2:
        raise ValueError("num_pixels must be at least 2")
    blocks = []
    start = 0
    index = 0
    while start < num_pixels:
        count = min(_BLOCK_PIXELS, num_pixels - start)
        blocks.append((count, np.random.SeedSequence(entropy=seed, spawn_key=(index,))))
        start += count
        index += 1
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            sums = list(pool.map(lambda b: _simulate_block(stats, n, b[0], b[1]), blocks))
    else:
        sums = [_simulate_block(stats, n, c, s) for c, s in blocks]
    return np.sum(sums, axis=0)


def monte_carlo_integral(
    stats: OcclusionStats,
    n: int,
    num_pixels: int,
    seed: int,
    workers: int = 1,
) -> ModelMoments:
    """Empirical integral-pixel moments from direct simulation.

    Each pixel draws n occlusion indicators and occluder values plus one
    shared signal value, then averages the n views. Pixels are processed in
    fixed-size blocks, each block seeded from (seed, block index), so the
    result is bit-identical for any worker count.

    Returns population moments across pixels (variance = E[x^2] - E[x]^2).
    """
    total = _power_sums(stats, n, num_pixels, seed, workers)
    m = total[1:] / total[0]
    mean = m[0]
    return ModelMoments(mean=float(mean), second_moment=float(m[1]), variance=float(m[1] - mean**2))


def variance_standard_error(stats: OcclusionStats, n: int, num_pixels: int, seed: int,
                            workers: int = 1) -> tuple[ModelMoments, float]:
    """Monte-Carlo moments plus the standard error of the variance estimate.

    The standard error uses the large-sample formula
    SE^2 = (m4 - m2^2) / P with central moments m2, m4 of the simulated
    integral pixels.
    """
    total = _power_sums(stats, n, num_pixels, seed, workers)
    p = total[0]
    m1, m2r, m3r, m4r = total[1:] / p
    mean = m1
    # central moments from raw moments
    m2 = m2r - mean**2
    m4 = m4r - 4.0 * mean * m3r + 6.0 * mean**2 * m2r - 3.0 * mean**4
    se = float(np.sqrt(max(m4 - m2**2, 0.0) / p))
    moments = ModelMoments(mean=float(mean), second_moment=float(m2r), variance=float(m2))
    return moments, se
