"""End-point error, strict/relaxed accuracy and outlier rate of a flow estimate."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .core import EmptyEvaluation

STRICT = 0.05
RELAXED = 0.1
OUTLIER_EPE = 0.3
OUTLIER_RATIO = 0.1


@dataclass(frozen=True)
class EvalReport:
    epe: float
    acc_strict: float
    acc_relaxed: float
    outliers: float
    evaluated_points: int

    def as_dict(self) -> dict:
        return asdict(self)


def evaluate(f_est, f_gt, mask=None) -> EvalReport:
    """Score ``f_est`` against ``f_gt`` on the points selected by ``mask``.

    ``EPE_i = |f_est_i - f_gt_i|``. A point is strictly accurate when
    ``EPE_i < 0.05`` or ``EPE_i / |f_gt_i| < 0.05``, relaxed accurate with
    0.1 for both, and an outlier when ``EPE_i > 0.3`` or the ratio exceeds
    0.1. For a zero ground-truth vector the ratio is 0 if the estimate is
    exact and ``inf`` otherwise. Rates are percentages.
    """
    f_est = np.asarray(f_est, dtype=np.float64)
    f_gt = np.asarray(f_gt, dtype=np.float64)
    if f_est.shape != f_gt.shape:
        raise ValueError(f"flow shapes differ: {f_est.shape} vs {f_gt.shape}")
    if mask is None:
        mask = np.ones(f_gt.shape[0], dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (f_gt.shape[0],):
        raise ValueError("mask length does not match the flow")
    if not mask.any():
        raise EmptyEvaluation("EmptyEvaluation: mask selects no point")

    err = np.linalg.norm(f_est[mask] - f_gt[mask], axis=1)
    norm = np.linalg.norm(f_gt[mask], axis=1)
    ratio = np.full_like(err, np.inf)
    np.divide(err, norm, out=ratio, where=norm > 0)
    ratio[(norm == 0) & (err == 0)] = 0.0

    strict = (err < STRICT) | (ratio < STRICT)
    relaxed = (err < RELAXED) | (ratio < RELAXED)
    outlier = (err > OUTLIER_EPE) | (ratio > OUTLIER_RATIO)
    count = err.size
    return EvalReport(
        epe=float(np.mean(err)),
        acc_strict=100.0 * np.count_nonzero(strict) / count,
        acc_relaxed=100.0 * np.count_nonzero(relaxed) / count,
        outliers=100.0 * np.count_nonzero(outlier) / count,
        evaluated_points=int(count),
    )


def mean_report(reports) -> EvalReport:
    """Average several reports field by field; ``evaluated_points`` is summed."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to average")
    return EvalReport(
        epe=float(np.mean([r.epe for r in reports])),
        acc_strict=float(np.mean([r.acc_strict for r in reports])),
        acc_relaxed=float(np.mean([r.acc_relaxed for r in reports])),
        outliers=float(np.mean([r.outliers for r in reports])),
        evaluated_points=int(sum(r.evaluated_points for r in reports)),
    )
