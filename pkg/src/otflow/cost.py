"""Per-point descriptors and the gated cosine-distance transport cost."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Tuple

import numpy as np

from .core import ScenePair, knn, pairwise_sq_dist

DEFAULT_GATE_RADIUS = 10.0
DEFAULT_NEIGHBOURS = 32

_ZERO_ROW_GUARD = 1e-9


@dataclass(frozen=True)
class CostMatrix:
    """Cosine-distance costs with hard gating.

    Attributes
    ----------
    values : numpy.ndarray (n, n)
        Finite costs in ``[0, 2]``; gated entries hold ``+inf``.
    admissible : numpy.ndarray (n, n) of bool
        ``False`` exactly where ``||p_i - q_j|| > gate_radius``. This flag,
        not the stored infinity, is what the solvers consult.
    gate_radius : float
        Gating radius in meters.
    """

    values: np.ndarray
    admissible: np.ndarray
    gate_radius: float = float("inf")

    @classmethod
    def from_array(cls, values, gate_radius: float = float("inf")) -> "CostMatrix":
        """Wrap a raw matrix; non-finite entries are treated as gated."""
        values = np.array(values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("cost matrix must be two-dimensional")
        if np.any(np.isnan(values)) or np.any(values < 0):
            raise ValueError("costs must be non-negative")
        admissible = np.isfinite(values)
        values[~admissible] = np.inf
        return cls(values, admissible, gate_radius)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def scaled(self, factor: float) -> "CostMatrix":
        if not factor > 0:
            raise ValueError("scale factor must be positive")
        return CostMatrix(self.values * factor, self.admissible, self.gate_radius)


def _check_features(f, name):
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 2:
        raise ValueError(f"{name} must be a 2-d feature matrix")
    if not np.all(np.isfinite(f)):
        raise ValueError(f"{name} contains non-finite entries")
    if np.any(np.linalg.norm(f, axis=1) == 0):
        raise ValueError(f"{name} has a zero-norm row; cosine distance undefined")
    return f


def handcrafted_features(cloud, m: int = DEFAULT_NEIGHBOURS) -> np.ndarray:
    """Nine-channel geometric descriptor, one row per point.

    Channels are: the point's coordinates relative to the cloud centroid;
    the eigenvalues of its ``m``-neighbourhood covariance, sorted in
    descending order and normalised to sum to one (all zero for a
    degenerate neighbourhood); and the vector from the point to its
    neighbourhood centroid.
    """
    cloud = np.asarray(cloud, dtype=np.float64)
    n = cloud.shape[0]
    if not 1 <= m <= n:
        raise ValueError(f"m must satisfy 1 <= m <= n (n={n}), got {m}")
    nbr = cloud[knn(cloud, cloud, m)]  # (n, m, 3)
    local_mean = nbr.mean(axis=1)
    centred = nbr - local_mean[:, None, :]
    cov = np.einsum("nki,nkj->nij", centred, centred) / m
    eig = np.clip(np.linalg.eigvalsh(cov)[:, ::-1], 0.0, None)
    total = eig.sum(axis=1, keepdims=True)
    eig = np.divide(eig, total, out=np.zeros_like(eig), where=total > 0)
    feats = np.hstack([cloud - cloud.mean(axis=0), eig, local_mean - cloud])
    zero = ~np.any(feats != 0, axis=1)
    feats[zero, 0] = _ZERO_ROW_GUARD
    return feats


def oracle_features(pair: ScenePair) -> Tuple[np.ndarray, np.ndarray]:
    """One-hot descriptors that encode the true matching of a perfect pair.

    Source point ``i`` gets the indicator of ``i``; target point ``j`` the
    indicator of the source point mapped onto it. Matching pairs thus have
    cosine distance 0 and every other pair distance 1.
    """
    if pair.permutation is None:
        raise ValueError("oracle features need a scene pair with a permutation")
    n = pair.n
    fp = np.eye(n)
    fq = np.zeros((n, n))
    fq[pair.permutation, np.arange(n)] = 1.0
    return fp, fq


def build_cost(fp, fq, p, q, d_max: float = DEFAULT_GATE_RADIUS) -> CostMatrix:
    """Gated cosine distance between source and target descriptors.

    ``C_ij = 1 - <fp_i, fq_j> / (|fp_i| |fq_j|)`` when ``|p_i - q_j| <= d_max``
    and ``+inf`` otherwise. Finite values are clamped to ``[0, 2]``.
    """
    fp = _check_features(fp, "fp")
    fq = _check_features(fq, "fq")
    if fp.shape[1] != fq.shape[1]:
        raise ValueError(
            f"feature dimensions differ: {fp.shape[1]} vs {fq.shape[1]}"
        )
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if fp.shape[0] != p.shape[0] or fq.shape[0] != q.shape[0]:
        raise ValueError("feature rows must match the number of points")
    up = fp / np.linalg.norm(fp, axis=1, keepdims=True)
    uq = fq / np.linalg.norm(fq, axis=1, keepdims=True)
    values = 1.0 - up @ uq.T
    np.clip(values, 0.0, 2.0, out=values)
    admissible = np.sqrt(pairwise_sq_dist(p, q)) <= d_max
    values[~admissible] = np.inf
    return CostMatrix(values, admissible, float(d_max))


FeatureProvider = Callable[[ScenePair], Tuple[np.ndarray, np.ndarray]]


def _handcrafted_provider(m: int = DEFAULT_NEIGHBOURS) -> FeatureProvider:
    def provider(pair: ScenePair):
        return handcrafted_features(pair.source, m), handcrafted_features(pair.target, m)
    return provider


FEATURE_PROVIDERS: Dict[str, Callable[..., FeatureProvider]] = {
    "handcrafted": _handcrafted_provider,
    "oracle": lambda **_: oracle_features,
}


def get_feature_provider(mode: str, **options) -> FeatureProvider:
    """Look up a feature provider by name (``"handcrafted"`` or ``"oracle"``)."""
    try:
        factory = FEATURE_PROVIDERS[mode]
    except KeyError:
        raise ValueError(
            f"unknown feature mode {mode!r}; choose from {sorted(FEATURE_PROVIDERS)}"
        ) from None
    return factory(**options)


def scene_cost(pair: ScenePair, mode: str = "handcrafted",
               d_max: float = DEFAULT_GATE_RADIUS, **options) -> CostMatrix:
    fp, fq = get_feature_provider(mode, **options)(pair)
    return build_cost(fp, fq, pair.source, pair.target, d_max)
