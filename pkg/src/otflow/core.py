"""Shared point-cloud containers, exact neighbour queries and seeded randomness.

Point clouds, flow fields and masks are plain numpy arrays with shapes
``(n, 3)``, ``(n, 3)`` and ``(n,)``. The ``as_*`` helpers validate and
freeze them; everything downstream assumes validated input.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

# Rows of the query block processed at once by the brute-force kernels.
_CHUNK = 256


class OtflowError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateCost(OtflowError):
    """A row or column of a cost matrix has no admissible entry."""

    def __init__(self, rows, cols):
        self.rows = [int(i) for i in rows]
        self.cols = [int(j) for j in cols]
        super().__init__(
            f"DegenerateCost: fully gated rows {self.rows}, columns {self.cols}"
        )


class Infeasible(OtflowError):
    """No finite-cost perfect matching exists."""


class EmptyEvaluation(OtflowError):
    """The validity mask selects no point."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def as_cloud(points, name: str = "cloud") -> np.ndarray:
    """Validate an ``(n, 3)`` array of finite coordinates and return a read-only copy."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"{name} must have shape (n, 3), got {arr.shape}")
    if arr.shape[0] < 1:
        raise ValueError(f"{name} must contain at least one point")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite coordinates")
    return _frozen(arr)


def as_flow(vectors, n: Optional[int] = None, name: str = "flow") -> np.ndarray:
    arr = np.asarray(vectors, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"{name} must have shape (n, 3), got {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise ValueError(f"{name} has {arr.shape[0]} vectors, expected {n}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return _frozen(arr)


def as_mask(flags, n: Optional[int] = None) -> np.ndarray:
    arr = np.asarray(flags)
    if arr.ndim != 1:
        raise ValueError(f"mask must be one-dimensional, got shape {arr.shape}")
    if arr.dtype != bool:
        if not np.all(np.isin(arr, (0, 1))):
            raise ValueError("mask entries must be 0/1 or booleans")
        arr = arr.astype(bool)
    if n is not None and arr.shape[0] != n:
        raise ValueError(f"mask has {arr.shape[0]} flags, expected {n}")
    return _frozen(arr)


@dataclass(frozen=True)
class ScenePair:
    """Two clouds of one scene with ground-truth flow from ``source`` to ``target``.

    ``permutation[i]`` is the target index matched to source point ``i``;
    when present, ``source[i] + truth[i] == target[permutation[i]]`` holds
    bitwise.
    """

    source: np.ndarray
    target: np.ndarray
    truth: np.ndarray
    mask: np.ndarray
    permutation: Optional[np.ndarray] = None

    def __post_init__(self):
        src = as_cloud(self.source, "source")
        n = src.shape[0]
        tgt = as_cloud(self.target, "target")
        if tgt.shape[0] != n:
            raise ValueError("source and target must have the same number of points")
        object.__setattr__(self, "source", src)
        object.__setattr__(self, "target", tgt)
        object.__setattr__(self, "truth", as_flow(self.truth, n, "truth"))
        object.__setattr__(self, "mask", as_mask(self.mask, n))
        if self.permutation is not None:
            perm = np.asarray(self.permutation, dtype=np.int64)
            if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
                raise ValueError("permutation must be a bijection on 0..n-1")
            object.__setattr__(self, "permutation", _frozen(perm))

    @property
    def n(self) -> int:
        return self.source.shape[0]


def pairwise_sq_dist(p, q) -> np.ndarray:
    """Squared Euclidean distances, entry ``(i, j) = ||p_i - q_j||^2``.

    Computed from coordinate differences rather than the Gram expansion, so
    the result is exactly transposition-symmetric and free of cancellation.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    d = np.subtract.outer(p[:, 0], q[:, 0])
    d *= d
    for k in (1, 2):
        diff = np.subtract.outer(p[:, k], q[:, k])
        diff *= diff
        d += diff
    return d


def knn(cloud, queries, m: int) -> np.ndarray:
    """Exact ``m`` nearest neighbours of every query among ``cloud``.

    Parameters
    ----------
    cloud : array-like (n, 3)
        Points searched.
    queries : array-like (k, 3)
        Query points; a query equal to a cloud point finds itself.
    m : int
        Neighbours per query, ``1 <= m <= n``.

    Returns
    -------
    numpy.ndarray (k, m) of int64
        Indices into ``cloud``, nearest first. Equal distances are ordered
        by ascending index.
    """
    cloud = np.asarray(cloud, dtype=np.float64)
    queries = np.asarray(queries, dtype=np.float64)
    n = cloud.shape[0]
    if not 1 <= m <= n:
        raise ValueError(f"m must satisfy 1 <= m <= n (n={n}), got {m}")
    out = np.empty((queries.shape[0], m), dtype=np.int64)
    for start in range(0, queries.shape[0], _CHUNK):
        block = pairwise_sq_dist(queries[start:start + _CHUNK], cloud)
        # stable sort keeps lowest index first among equal distances
        out[start:start + _CHUNK] = np.argsort(block, axis=1, kind="stable")[:, :m]
    return out


def seeded_rng(seed: int) -> np.random.Generator:
    """Deterministic generator (PCG64) for a 64-bit seed."""
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))
