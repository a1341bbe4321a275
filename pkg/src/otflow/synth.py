"""Synthetic scene pairs in three regimes, and an exact assignment solver.

* perfect: the target is an exact permutation of the displaced source;
* resampled: source and target are drawn independently from a dense pool,
  so most points have no exact counterpart;
* occluded: as resampled, but a half-space of the scene is missing from the
  target and masked out of the ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import Infeasible, ScenePair, seeded_rng
from .cost import CostMatrix

SCENE_EXTENT = 10.0
EXHAUSTIVE_MAX_N = 10


@dataclass(frozen=True)
class RigidMotion:
    """Rotation about ``centre`` followed by a translation."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    centre: np.ndarray = field(default_factory=lambda: np.full(3, SCENE_EXTENT / 2))

    @classmethod
    def identity(cls) -> "RigidMotion":
        return cls()

    @classmethod
    def pure_translation(cls, t) -> "RigidMotion":
        return cls(translation=np.asarray(t, dtype=np.float64))

    @classmethod
    def about_axis(cls, axis, degrees: float, translation=(0.0, 0.0, 0.0)) -> "RigidMotion":
        axis = np.asarray(axis, dtype=np.float64)
        axis = axis / np.linalg.norm(axis)
        theta = math.radians(degrees)
        K = np.array([[0, -axis[2], axis[1]],
                      [axis[2], 0, -axis[0]],
                      [-axis[1], axis[0], 0]])
        R = np.eye(3) + math.sin(theta) * K + (1 - math.cos(theta)) * (K @ K)
        return cls(rotation=R, translation=np.asarray(translation, dtype=np.float64))

    @classmethod
    def sample(cls, rng: np.random.Generator, max_rotation_deg: float,
               max_translation: float) -> "RigidMotion":
        axis = rng.normal(size=3)
        angle = rng.uniform(-max_rotation_deg, max_rotation_deg)
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        t = direction * rng.uniform(0.0, max_translation)
        return cls.about_axis(axis, angle, t)

    def displacement(self, x: np.ndarray) -> np.ndarray:
        """Displacement of each point; exactly zero rotation part for ``R = I``."""
        rel = x - self.centre
        return (rel @ self.rotation.T - rel) + self.translation


@dataclass(frozen=True)
class SceneSpec:
    """Generation settings shared by the three regimes.

    ``pool_size`` defaults to ``4 n``. ``motion`` overrides the random rigid
    motion drawn from the rotation/translation bounds. ``geometry`` selects
    how the dense pool of the resampled and occluded regimes is drawn:
    ``"cube"`` (uniform in the scene cube, like the perfect regime) or
    ``"surface"`` (a wavy height field).
    """

    n: int
    max_rotation_deg: float = 15.0
    max_translation: float = 1.0
    jitter: float = 0.01
    occlusion_fraction: float = 0.0
    pool_size: Optional[int] = None
    seed: int = 0
    motion: Optional[RigidMotion] = None
    geometry: str = "cube"

    def __post_init__(self):
        if self.geometry not in _POOL_SAMPLERS:
            raise ValueError(f"unknown geometry {self.geometry!r}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.pool_size is not None and self.pool_size < self.n:
            raise ValueError("pool_size must be >= n")
        if not 0.0 <= self.occlusion_fraction < 1.0:
            raise ValueError("occlusion_fraction must lie in [0, 1)")
        if self.jitter < 0:
            raise ValueError("jitter must be >= 0")

    @property
    def pool(self) -> int:
        return 4 * self.n if self.pool_size is None else self.pool_size


def _motion(spec: SceneSpec, rng: np.random.Generator) -> RigidMotion:
    if spec.motion is not None:
        return spec.motion
    return RigidMotion.sample(rng, spec.max_rotation_deg, spec.max_translation)


def _flow(spec, rng, motion, x):
    f = motion.displacement(x)
    if spec.jitter > 0:
        f = f + rng.normal(scale=spec.jitter, size=x.shape)
    return f


def _cube(rng: np.random.Generator, count: int) -> np.ndarray:
    return rng.uniform(0.0, SCENE_EXTENT, size=(count, 3))


def _surface(rng: np.random.Generator, count: int) -> np.ndarray:
    """Points on a wavy height field spanning the scene cube."""
    xy = rng.uniform(0.0, SCENE_EXTENT, size=(count, 2))
    freq = rng.uniform(0.3, 1.2, size=(3, 2))
    phase = rng.uniform(0.0, 2 * np.pi, size=3)
    amp = rng.uniform(0.5, 1.5, size=3)
    z = SCENE_EXTENT / 2 + np.sin(xy @ freq.T + phase) @ amp
    return np.column_stack([xy, z])


_POOL_SAMPLERS = {"cube": _cube, "surface": _surface}


def gen_perfect(spec: SceneSpec) -> ScenePair:
    """Scene whose target is an exact permutation of the displaced source.

    Source points are uniform in a 10 m cube. The flow is the rigid
    displacement plus jitter; targets are formed as ``p + f`` so that
    ``p[i] + f[i] == q[sigma[i]]`` holds bitwise.
    """
    rng = seeded_rng(spec.seed)
    motion = _motion(spec, rng)
    p = _cube(rng, spec.n)
    f = _flow(spec, rng, motion, p)
    sigma = rng.permutation(spec.n)
    q = np.empty_like(p)
    q[sigma] = p + f
    return ScenePair(p, q, f, np.ones(spec.n, dtype=bool), sigma)


def _dense_pool(spec: SceneSpec, rng: np.random.Generator):
    motion = _motion(spec, rng)
    pool = _POOL_SAMPLERS[spec.geometry](rng, spec.pool)
    disp = _flow(spec, rng, motion, pool)
    return pool, disp, pool + disp


def gen_resampled(spec: SceneSpec) -> ScenePair:
    """Source and target sampled independently from a dense displaced pool."""
    rng = seeded_rng(spec.seed)
    pool, disp, warped = _dense_pool(spec, rng)
    idx_p = rng.choice(spec.pool, size=spec.n, replace=False)
    idx_q = rng.choice(spec.pool, size=spec.n, replace=False)
    return ScenePair(pool[idx_p], warped[idx_q], disp[idx_p],
                     np.ones(spec.n, dtype=bool))


def gen_occluded(spec: SceneSpec) -> ScenePair:
    """Resampled pair with a contiguous half-space removed from the target pool.

    The cut plane has a random normal and is positioned so that exactly
    ``ceil(rho n)`` source points lie beyond it. Their warped counterparts,
    and those of every pool point beyond the plane, are unavailable to the
    target; the mask is false exactly on those source points.
    """
    rho = spec.occlusion_fraction
    if rho <= 0:
        raise ValueError("gen_occluded needs occlusion_fraction > 0")
    hidden = math.ceil(rho * spec.n)
    if hidden >= spec.n:
        raise ValueError(f"occlusion would hide all {spec.n} source points")

    rng = seeded_rng(spec.seed)
    pool, disp, warped = _dense_pool(spec, rng)
    idx_p = rng.choice(spec.pool, size=spec.n, replace=False)
    normal = rng.normal(size=3)
    normal /= np.linalg.norm(normal)

    proj = pool @ normal
    ranked = np.argsort(proj[idx_p], kind="stable")[::-1]
    cut = 0.5 * (proj[idx_p[ranked[hidden - 1]]] + proj[idx_p[ranked[hidden]]])
    visible = np.flatnonzero(proj < cut)
    if visible.size < spec.n:
        raise ValueError(
            f"only {visible.size} visible pool points for n={spec.n}; increase pool_size"
        )
    idx_q = visible[rng.choice(visible.size, size=spec.n, replace=False)]
    mask = np.ones(spec.n, dtype=bool)
    mask[ranked[:hidden]] = False
    return ScenePair(pool[idx_p], warped[idx_q], disp[idx_p], mask)


def generate(regime: str, spec: SceneSpec) -> ScenePair:
    try:
        gen = {"perfect": gen_perfect, "resampled": gen_resampled,
               "occluded": gen_occluded}[regime]
    except KeyError:
        raise ValueError(f"unknown regime {regime!r}") from None
    return gen(spec)


def _branch_and_bound(values: np.ndarray, allowed: np.ndarray):
    n = values.shape[0]
    best_cost = math.inf
    best = None
    used = [False] * n
    current = [0] * n
    rows = [[j for j in range(n) if allowed[i, j]] for i in range(n)]
    vals = values.tolist()

    def visit(i, partial):
        nonlocal best_cost, best
        if partial >= best_cost:
            return
        if i == n:
            best_cost, best = partial, list(current)
            return
        row = vals[i]
        for j in rows[i]:
            if not used[j]:
                used[j] = True
                current[i] = j
                visit(i + 1, partial + row[j])
                used[j] = False

    visit(0, 0.0)
    return best


def exact_assignment(C, method: str = "auto") -> np.ndarray:
    """Minimum-cost perfect matching ``sigma`` over admissible entries.

    ``method="exhaustive"`` searches permutations in lexicographic order
    with branch-and-bound and keeps only strict improvements, so among
    equal-cost optima the lexicographically smallest is returned.
    ``method="lsa"`` uses scipy's augmenting-path solver, whose choice
    among tied optima is unspecified. ``"auto"`` picks exhaustive for
    ``n <= 10``.

    Raises
    ------
    Infeasible
        If no perfect matching avoids the gated entries.
    """
    if not isinstance(C, CostMatrix):
        C = CostMatrix.from_array(C)
    n, n_cols = C.shape
    if n != n_cols:
        raise ValueError("exact_assignment needs a square cost matrix")
    if method == "auto":
        method = "exhaustive" if n <= EXHAUSTIVE_MAX_N else "lsa"
    if method == "exhaustive":
        best = _branch_and_bound(C.values, C.admissible)
        if best is None:
            raise Infeasible("Infeasible: no finite-cost perfect matching")
        return np.asarray(best, dtype=np.int64)
    if method == "lsa":
        values = np.where(C.admissible, C.values, np.inf)
        try:
            rows, cols = linear_sum_assignment(values)
        except ValueError as exc:
            raise Infeasible(f"Infeasible: {exc}") from None
        sigma = np.empty(n, dtype=np.int64)
        sigma[rows] = cols
        return sigma
    raise ValueError(f"unknown method {method!r}")
