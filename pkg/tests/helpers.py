"""Shared oracle utilities: grid normalization and histogram comparison."""
from __future__ import annotations

import numpy as np


def normalized_grid_density(log_target, lo: float, hi: float, num: int = 4001):
    """Normalize exp(log_target) on [lo, hi] with the trapezoid rule.

    log_target takes a scalar; returns (grid, density) arrays.
    """
    xs = np.linspace(lo, hi, num)
    logs = np.array([log_target(float(x)) for x in xs])
    logs -= logs.max()
    dens = np.exp(logs)
    dens /= np.trapezoid(dens, xs)
    return xs, dens


def hist_sup_error(draws, grid, density, bins: int = 40) -> float:
    """Sup over bins of |empirical bin density - exact bin-average density|.

    The exact bin mass is integrated from the fine (grid, density) pair so
    the comparison does not depend on where bin edges fall.
    """
    draws = np.asarray(draws, dtype=float)
    edges = np.linspace(grid[0], grid[-1], bins + 1)
    width = edges[1] - edges[0]
    counts, _ = np.histogram(draws, bins=edges)
    inside = counts.sum()
    emp = counts / (draws.size * width)
    cum = np.concatenate(
        [[0.0], np.cumsum(np.diff(grid) * 0.5 * (density[1:] + density[:-1]))]
    )
    exact = np.diff(np.interp(edges, grid, cum)) / width
    # guard: the window must actually hold the draws being compared
    assert inside >= 0.99 * draws.size, "histogram window clips the sample"
    return float(np.max(np.abs(emp - exact)))


def batch_se(series, n_batch: int = 50) -> float:
    """Batch-means standard error for a (possibly autocorrelated) series."""
    series = np.asarray(series, dtype=float)
    usable = (series.size // n_batch) * n_batch
    means = series[:usable].reshape(n_batch, -1).mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(n_batch))
