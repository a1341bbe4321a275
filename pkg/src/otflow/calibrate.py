"""Grid search over (epsilon, power, K) on validation scenes."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from typing import Dict, List, Optional, Sequence, Tuple

from .core import ScenePair
from .cost import DEFAULT_GATE_RADIUS, DEFAULT_NEIGHBOURS, scene_cost
from .flow import DEFAULT_TAU, interpolate_flow
from .metrics import EvalReport, evaluate, mean_report
from .transport import EPSILON_FLOOR, OtParams, sinkhorn

Candidate = Tuple[float, float, int]

DEFAULT_EPSILONS = (0.03, 0.1, 0.3, 1.0)
DEFAULT_POWERS = (0.0, 0.25, 0.5, 0.75, 0.9, 1.0)
DEFAULT_KS = (1, 3, 5)

# Mean EPEs closer than this (meters) are considered tied.
TIE_TOLERANCE = 1e-9


def worker_count(env: str = "OTFLOW_THREADS") -> int:
    """Worker cap from the environment; ``0`` or unset means one per CPU."""
    raw = os.environ.get(env, "0").strip() or "0"
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"{env} must be an integer, got {raw!r}") from None
    if value < 0:
        raise ValueError(f"{env} must be >= 0, got {value}")
    return value or (os.cpu_count() or 1)


@dataclass(frozen=True)
class CalibrationGrid:
    epsilons: Sequence[float] = DEFAULT_EPSILONS
    powers: Sequence[float] = DEFAULT_POWERS
    ks: Sequence[int] = DEFAULT_KS
    use_floor: bool = True

    def __post_init__(self):
        for name in ("epsilons", "powers", "ks"):
            values = tuple(getattr(self, name))
            if not values:
                raise ValueError(f"calibration grid has no {name}")
            object.__setattr__(self, name, values)
        for eps in self.epsilons:
            if not eps > 0:
                raise ValueError(f"epsilon candidates must be positive, got {eps}")
            if self.use_floor and eps < EPSILON_FLOOR:
                raise ValueError(f"epsilon {eps} is below the floor {EPSILON_FLOOR}")
        for power in self.powers:
            if not 0.0 <= power <= 1.0:
                raise ValueError(f"power candidates must lie in [0, 1], got {power}")
        for k in self.ks:
            if int(k) != k or k < 0:
                raise ValueError(f"iteration counts must be non-negative integers, got {k}")

    def candidates(self) -> List[Candidate]:
        return [(float(e), float(p), int(k))
                for e, p, k in product(self.epsilons, self.powers, self.ks)]


@dataclass(frozen=True)
class CalibrationResult:
    best: Candidate
    table: Dict[Candidate, EvalReport] = field(repr=False)

    @property
    def best_report(self) -> EvalReport:
        return self.table[self.best]

    def rows(self) -> List[dict]:
        return [{"epsilon": e, "power": p, "iterations": k, **r.as_dict()}
                for (e, p, k), r in self.table.items()]

    def as_dict(self) -> dict:
        e, p, k = self.best
        return {"best": {"epsilon": e, "power": p, "iterations": k,
                         **self.best_report.as_dict()},
                "table": self.rows()}


def select_best(table: Dict[Candidate, EvalReport],
                tie_tolerance: float = TIE_TOLERANCE) -> Candidate:
    """Lowest mean EPE; near-ties go to smaller K, then power, then epsilon."""
    floor = min(r.epe for r in table.values())
    tied = [c for c, r in table.items() if r.epe <= floor + tie_tolerance]
    return min(tied, key=lambda c: (c[2], c[1], c[0]))


def grid_search(scenes: Sequence[ScenePair], feature_mode: str = "handcrafted",
                grid: Optional[CalibrationGrid] = None, *,
                m: int = DEFAULT_NEIGHBOURS, d_max: float = DEFAULT_GATE_RADIUS,
                tau: float = DEFAULT_TAU, tie_tolerance: float = TIE_TOLERANCE,
                workers: Optional[int] = None) -> CalibrationResult:
    """Score every grid candidate on every scene and pick the best.

    Each candidate runs transport and barycentric interpolation on the
    per-scene costs (features and costs are computed once per scene) and
    is scored by the masked metrics averaged over scenes.
    """
    scenes = list(scenes)
    if not scenes:
        raise ValueError("grid_search needs at least one scene")
    grid = CalibrationGrid() if grid is None else grid
    options = {"m": m} if feature_mode == "handcrafted" else {}
    costs = [scene_cost(s, feature_mode, d_max, **options) for s in scenes]

    def score(candidate: Candidate) -> EvalReport:
        eps, power, k = candidate
        params = OtParams(eps, power, k, use_floor=grid.use_floor)
        reports = []
        for scene, C in zip(scenes, costs):
            flow = interpolate_flow(sinkhorn(C, params), scene.source, scene.target, tau)
            reports.append(evaluate(flow.raw, scene.truth, scene.mask))
        return mean_report(reports)

    candidates = grid.candidates()
    workers = worker_count() if workers is None else workers
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(score, candidates))
    else:
        reports = [score(c) for c in candidates]
    table = dict(zip(candidates, reports))
    return CalibrationResult(select_best(table, tie_tolerance), table)
