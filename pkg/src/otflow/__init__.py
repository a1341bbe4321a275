"""Scene flow between point clouds from relaxed entropic optimal transport."""

from .core import (DegenerateCost, EmptyEvaluation, Infeasible, OtflowError, ScenePair,
                   knn, pairwise_sq_dist, seeded_rng)
from .cost import CostMatrix, build_cost, handcrafted_features, oracle_features, scene_cost
from .transport import OtParams, TransportPlan, flot0_plan, marginals, sinkhorn
from .flow import FlowEstimate, attention_flow, interpolate_flow, masked_l1, smooth_refine
from .metrics import EvalReport, evaluate
from .synth import (RigidMotion, SceneSpec, exact_assignment, gen_occluded, gen_perfect,
                    gen_resampled)
from .calibrate import CalibrationGrid, CalibrationResult, grid_search

__version__ = "0.1.0"

__all__ = [
    "DegenerateCost", "EmptyEvaluation", "Infeasible", "OtflowError", "ScenePair",
    "knn", "pairwise_sq_dist", "seeded_rng",
    "CostMatrix", "build_cost", "handcrafted_features", "oracle_features", "scene_cost",
    "OtParams", "TransportPlan", "flot0_plan", "marginals", "sinkhorn",
    "FlowEstimate", "attention_flow", "interpolate_flow", "masked_l1", "smooth_refine",
    "EvalReport", "evaluate",
    "RigidMotion", "SceneSpec", "exact_assignment", "gen_occluded", "gen_perfect",
    "gen_resampled",
    "CalibrationGrid", "CalibrationResult", "grid_search",
]
