"""Planar locations, distances, and the covariance building blocks.

Everything downstream works with an isotropic exponential correlation
exp(-h / theta) on Euclidean distance, where theta is a range parameter
(larger theta means longer-range dependence).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg.lapack import dpotri
from scipy.spatial.distance import pdist, squareform

# Fixed diagonal jitter applied at factorization time (never stored in the
# matrices themselves) so near-singular correlation matrices still factor.
CHOL_JITTER = 1e-10


@dataclass(frozen=True)
class LocationSet:
    """An ordered set of distinct planar coordinates, shape (n, 2)."""

    coords: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise ValueError(f"coords must have shape (n, 2), got {coords.shape}")
        if not np.all(np.isfinite(coords)):
            raise ValueError("coords must be finite")
        # duplicates break positive definiteness of every correlation matrix
        _, first = np.unique(coords, axis=0, return_index=True)
        if first.size != coords.shape[0]:
            dup = _first_duplicate_pair(coords)
            raise ValueError(f"duplicate locations at indices {dup[0]} and {dup[1]}")
        object.__setattr__(self, "coords", coords)

    def __len__(self) -> int:
        return self.coords.shape[0]


def _first_duplicate_pair(coords: np.ndarray) -> tuple[int, int]:
    seen: dict[tuple[float, float], int] = {}
    for i, (x, y) in enumerate(coords):
        key = (float(x), float(y))
        if key in seen:
            return seen[key], i
        seen[key] = i
    raise AssertionError("no duplicate found")


@dataclass(frozen=True)
class CorrelationSpec:
    """Range parameter of the exponential correlation exp(-h/theta)."""

    theta: float

    def __post_init__(self):
        if not (np.isfinite(self.theta) and self.theta > 0):
            raise ValueError(f"theta must be positive and finite, got {self.theta}")


def distance_matrix(locs: LocationSet) -> np.ndarray:
    """Symmetric Euclidean distance matrix with a zero diagonal."""
    if len(locs) == 1:
        return np.zeros((1, 1))
    return squareform(pdist(locs.coords))


def median_distance(locs: LocationSet) -> float:
    """Median of the n(n-1)/2 pairwise distances."""
    if len(locs) < 2:
        raise ValueError("need at least two locations for a median distance")
    return float(np.median(pdist(locs.coords)))


def exp_correlation(dist: np.ndarray, spec: CorrelationSpec | float) -> np.ndarray:
    """Exponential correlation matrix exp(-dist/theta); unit diagonal."""
    theta = spec.theta if isinstance(spec, CorrelationSpec) else CorrelationSpec(spec).theta
    dist = np.asarray(dist, dtype=float)
    if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
        raise ValueError("dist must be a square matrix")
    return np.exp(-dist / theta)


def build_b_matrix(corr_w: np.ndarray, lam: np.ndarray, omega2: float) -> np.ndarray:
    """Scaled conditional covariance  B = D C D + omega2 I,  D = diag(lam^-1/2).

    This is the covariance of the observations (up to the factor sigma2) once
    the skew component is conditioned on: the process part is damped by the
    local mixing field lam, the nugget contributes omega2 on the diagonal.
    """
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise ValueError("lam must be strictly positive")
    if omega2 < 0:
        raise ValueError(f"omega2 must be nonnegative, got {omega2}")
    d = 1.0 / np.sqrt(lam)
    b = corr_w * np.outer(d, d)
    b[np.diag_indices_from(b)] += omega2
    return b


def jittered_cholesky(mat: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of mat + CHOL_JITTER * I.

    For correlation-derived matrices only; generic density code factors the
    matrix it is given and lets LinAlgError propagate.
    """
    mat = np.array(mat, dtype=float)
    mat[np.diag_indices_from(mat)] += CHOL_JITTER
    return np.linalg.cholesky(mat)


def chol_inverse(chol: np.ndarray) -> np.ndarray:
    """Full inverse of an SPD matrix given its lower Cholesky factor."""
    inv, info = dpotri(chol, lower=1)
    if info != 0:
        raise np.linalg.LinAlgError(f"triangular inversion failed with code {info}")
    return inv + np.tril(inv, -1).T
