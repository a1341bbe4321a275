"""Unrolled Sinkhorn iterations for entropic transport with relaxed marginals.

The relaxed problem penalises marginal violations with a KL term of weight
``lambda``; in the scaling iterations this weight only appears through the
exponent ``power = lambda / (lambda + epsilon)``, which is what ``OtParams``
stores. ``power = 0`` gives the unscaled kernel ``exp(-C / epsilon)``
(attention with temperature ``epsilon``); ``power = 1`` is the balanced
Sinkhorn-Knopp scaling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .core import DegenerateCost
from .cost import CostMatrix

EPSILON_FLOOR = 0.03
EXP_CLAMP = 700.0
TINY_DENOMINATOR = 1e-300


@dataclass(frozen=True)
class OtParams:
    """Parameters of the transport module.

    Parameters
    ----------
    epsilon : float
        Entropic weight, > 0.
    power : float
        Marginal exponent ``lambda / (lambda + epsilon)`` in ``[0, 1]``.
    iterations : int
        Number of unrolled scaling iterations ``K``.
    epsilon_floor : float
        Lower bound applied to ``epsilon`` when ``use_floor`` is set.
    use_floor : bool
        Disable only to probe the small-``epsilon`` limit.
    """

    epsilon: float = EPSILON_FLOOR
    power: float = 1.0
    iterations: int = 1
    epsilon_floor: float = EPSILON_FLOOR
    use_floor: bool = True

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be positive and finite, got {self.epsilon}")
        if not 0.0 <= self.power <= 1.0:
            raise ValueError(f"power must lie in [0, 1], got {self.power}")
        if int(self.iterations) != self.iterations or self.iterations < 0:
            raise ValueError(f"iterations must be a non-negative integer, got {self.iterations}")
        object.__setattr__(self, "iterations", int(self.iterations))

    @classmethod
    def from_lambda(cls, epsilon: float, lam: float, iterations: int = 1,
                    **kwargs) -> "OtParams":
        """Build parameters from a mass-regularisation weight ``lam >= 0``.

        ``lam = inf`` selects ``power = 1`` exactly. The exponent uses the
        effective (floored) epsilon.
        """
        if lam < 0 or math.isnan(lam):
            raise ValueError(f"lambda must be >= 0, got {lam}")
        probe = cls(epsilon=epsilon, power=0.0, iterations=iterations, **kwargs)
        if math.isinf(lam):
            power = 1.0
        else:
            power = lam / (lam + probe.effective_epsilon)
        return cls(epsilon=epsilon, power=power, iterations=iterations, **kwargs)

    @property
    def effective_epsilon(self) -> float:
        if self.use_floor:
            return max(self.epsilon, self.epsilon_floor)
        return self.epsilon


@dataclass(frozen=True)
class TransportPlan:
    masses: np.ndarray
    params: Optional[OtParams] = None

    @property
    def shape(self) -> Tuple[int, int]:
        return self.masses.shape


def _as_cost(C) -> CostMatrix:
    if isinstance(C, CostMatrix):
        return C
    return CostMatrix.from_array(C)


def gibbs_kernel(C, epsilon: float) -> np.ndarray:
    """``exp(-C / epsilon)`` with gated entries set to exactly zero.

    Exponent arguments are clamped to ``[-700, 700]``.
    """
    C = _as_cost(C)
    arg = np.zeros(C.shape)
    np.divide(-C.values, epsilon, out=arg, where=C.admissible)
    np.clip(arg, -EXP_CLAMP, EXP_CLAMP, out=arg)
    U = np.exp(arg)
    U[~C.admissible] = 0.0
    return U


def _scale(target: float, denom: np.ndarray, power: float) -> np.ndarray:
    ratio = np.zeros_like(denom)
    np.divide(target, denom, out=ratio, where=denom >= TINY_DENOMINATOR)
    return ratio ** power


def sinkhorn(C, params: OtParams) -> TransportPlan:
    """Run ``params.iterations`` relaxed Sinkhorn updates and return the plan.

    Starting from ``a = 1/n`` and ``U = exp(-C / epsilon)``, each iteration
    sets ``b = [(1/n) / (U^T a)]^power`` then ``a = [(1/n) / (U b)]^power``;
    the plan is ``diag(a) U diag(b)``. Denominators below ``1e-300`` give a
    zero scaling for that entry. With zero iterations the scalings are left
    at one, i.e. the unscaled kernel is returned.

    Raises
    ------
    DegenerateCost
        If some row or column of ``C`` is entirely gated.
    """
    C = _as_cost(C)
    n_rows, n_cols = C.shape
    dead_rows = np.flatnonzero(~C.admissible.any(axis=1))
    dead_cols = np.flatnonzero(~C.admissible.any(axis=0))
    if dead_rows.size or dead_cols.size:
        raise DegenerateCost(dead_rows, dead_cols)

    U = gibbs_kernel(C, params.effective_epsilon)
    if params.iterations == 0:
        return TransportPlan(U, params)
    mass_a, mass_b = 1.0 / n_rows, 1.0 / n_cols
    a = np.full(n_rows, mass_a)
    for _ in range(params.iterations):
        b = _scale(mass_b, U.T @ a, params.power)
        a = _scale(mass_a, U @ b, params.power)
    return TransportPlan(a[:, None] * U * b[None, :], params)


def flot0_plan(C, epsilon: float) -> TransportPlan:
    """Closed-form plan without any marginal scaling: ``exp(-C / epsilon)``."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    return TransportPlan(gibbs_kernel(C, epsilon))


def marginals(T) -> Tuple[np.ndarray, np.ndarray]:
    """Row and column sums of a plan."""
    masses = T.masses if isinstance(T, TransportPlan) else np.asarray(T, dtype=np.float64)
    return masses.sum(axis=1), masses.sum(axis=0)


def marginal_residuals(T) -> Tuple[float, float]:
    """Max absolute deviation of row and column sums from the uniform ``1/n``."""
    rows, cols = marginals(T)
    return (float(np.max(np.abs(rows - 1.0 / rows.size))),
            float(np.max(np.abs(cols - 1.0 / cols.size))))
