"""Flow read-out from a transport plan, a neighbourhood smoother and the masked l1 loss."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import knn
from .transport import TransportPlan, gibbs_kernel

DEFAULT_TAU = 1e-12


@dataclass(frozen=True)
class FlowEstimate:
    """Raw barycentric flow, optional refined flow and the fallback count."""

    raw: np.ndarray
    refined: Optional[np.ndarray] = None
    fallback_count: int = 0

    @property
    def best(self) -> np.ndarray:
        return self.raw if self.refined is None else self.refined


def _masses(T) -> np.ndarray:
    return T.masses if isinstance(T, TransportPlan) else np.asarray(T, dtype=np.float64)


def interpolate_flow(T, p, q, tau: float = DEFAULT_TAU) -> FlowEstimate:
    """Barycentric projection of each source point onto the target cloud.

    ``f_i = sum_j T_ij q_j / sum_j T_ij - p_i`` for rows whose mass exceeds
    ``tau``; rows at or below ``tau`` get zero flow and are counted in
    ``fallback_count``.
    """
    W = _masses(T)
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if W.shape != (p.shape[0], q.shape[0]):
        raise ValueError(f"plan shape {W.shape} does not match clouds "
                         f"({p.shape[0]}, {q.shape[0]})")
    mass = W.sum(axis=1)
    ok = mass > tau
    flow = np.zeros_like(p)
    # normalise first so a single-entry row reproduces its target exactly
    flow[ok] = (W[ok] / mass[ok, None]) @ q - p[ok]
    return FlowEstimate(flow, fallback_count=int(np.count_nonzero(~ok)))


def attention_flow(C, epsilon: float, p, q, tau: float = DEFAULT_TAU) -> FlowEstimate:
    """Softmax-weighted displacement ``sum_j w_ij (q_j - p_i) / sum_j w_ij``.

    The weights are ``w_ij = exp(-C_ij / epsilon)`` (gated entries zero). This
    is the same quantity as ``interpolate_flow(flot0_plan(C, epsilon), ...)``
    computed the other way round, from per-pair displacements.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    W = gibbs_kernel(C, epsilon)
    mass = W.sum(axis=1)
    ok = mass > tau
    flow = np.zeros_like(p)
    for k in range(3):
        disp = q[None, :, k] - p[:, None, k]
        flow[ok, k] = np.einsum("ij,ij->i", W[ok], disp[ok]) / mass[ok]
    return FlowEstimate(flow, fallback_count=int(np.count_nonzero(~ok)))


def smooth_refine(raw, p, m: int = 8, rounds: int = 1) -> np.ndarray:
    """Average each flow vector over its ``m`` nearest source points, ``rounds`` times.

    A non-learned stand-in for a residual refinement network. The point
    itself is one of its ``m`` neighbours.
    """
    raw = np.asarray(raw, dtype=np.float64)
    n = raw.shape[0]
    if rounds < 0:
        raise ValueError("rounds must be >= 0")
    if not 1 <= m <= n:
        raise ValueError(f"m must satisfy 1 <= m <= n (n={n}), got {m}")
    if rounds == 0:
        return raw.copy()
    nbr = knn(p, p, m)
    flow = raw
    for _ in range(rounds):
        flow = flow[nbr].mean(axis=1)
    return flow


def masked_l1(f_est, f_gt, mask) -> float:
    """One third of the l1 norm of the flow error over masked-in points."""
    f_est = np.asarray(f_est, dtype=np.float64)
    f_gt = np.asarray(f_gt, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if f_est.shape != f_gt.shape or mask.shape != (f_gt.shape[0],):
        raise ValueError("flow estimate, ground truth and mask lengths differ")
    return float(np.abs(f_est[mask] - f_gt[mask]).sum() / 3.0)
