"""Command line interface: ``otflow synth|estimate|eval|calibrate|bench``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical
infeasibility (degenerate cost or infeasible assignment).
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

from . import io
from .calibrate import CalibrationGrid, DEFAULT_EPSILONS, DEFAULT_KS, DEFAULT_POWERS, grid_search
from .core import DegenerateCost, EmptyEvaluation, Infeasible, OtflowError, seeded_rng
from .cost import DEFAULT_GATE_RADIUS, DEFAULT_NEIGHBOURS, CostMatrix, build_cost, get_feature_provider
from .flow import DEFAULT_TAU, FlowEstimate, interpolate_flow, smooth_refine
from .metrics import evaluate
from .synth import SceneSpec, generate
from .transport import EPSILON_FLOOR, OtParams, flot0_plan, marginal_residuals, sinkhorn

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

# Sharpest allowed epsilon, one iteration, moderate mass relaxation.
DEFAULT_EPSILON = 0.03
DEFAULT_POWER = 0.64
DEFAULT_ITERATIONS = 1


@dataclass(frozen=True)
class RunConfig:
    features: str
    params: OtParams
    flot0: bool = False
    tau: float = DEFAULT_TAU
    refine_rounds: int = 0
    refine_m: int = 8
    m: int = DEFAULT_NEIGHBOURS
    d_max: float = DEFAULT_GATE_RADIUS


def _float_list(text: str) -> List[float]:
    try:
        values = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not values or not all(math.isfinite(v) for v in values):
        raise argparse.ArgumentTypeError(f"expected comma-separated finite numbers, got {text!r}")
    return values


def _int_list(text: str) -> List[int]:
    try:
        values = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _lambda(text: str) -> float:
    value = float(text)
    if math.isnan(value) or value < 0:
        raise argparse.ArgumentTypeError("lambda must be >= 0 or 'inf'")
    return value


def _dump(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        io.atomic_write_text(out, text)
    else:
        sys.stdout.write(text)


# -- synth -------------------------------------------------------------------

def cmd_synth(args) -> int:
    if args.regime == "perfect" and args.rho:
        raise _Usage("--rho applies to the occluded regime only")
    if args.regime == "occluded" and not args.rho:
        raise _Usage("the occluded regime needs --rho > 0")
    spec = SceneSpec(
        n=args.n, max_rotation_deg=args.max_rotation, max_translation=args.max_translation,
        jitter=args.jitter, occlusion_fraction=args.rho or 0.0, pool_size=args.pool,
        seed=args.seed, geometry=args.geometry,
    )
    pair = generate(args.regime, spec)
    out = args.out or f"scene-{args.regime}-n{args.n}-s{args.seed}"
    meta = {"regime": args.regime, "n": args.n, "seed": args.seed,
            "rho": spec.occlusion_fraction, "pool_size": spec.pool,
            "jitter": spec.jitter, "max_rotation_deg": spec.max_rotation_deg,
            "max_translation": spec.max_translation, "geometry": spec.geometry}
    print(io.write_scene(pair, out, meta))
    return EXIT_OK


# -- estimate ----------------------------------------------------------------

def run_estimate(pair, config: RunConfig):
    """Run one pipeline pass; return the flow estimate and the run report."""
    timing = {}
    t0 = time.perf_counter()
    options = {"m": config.m} if config.features == "handcrafted" else {}
    fp, fq = get_feature_provider(config.features, **options)(pair)
    t1 = time.perf_counter()
    C = build_cost(fp, fq, pair.source, pair.target, config.d_max)
    t2 = time.perf_counter()
    if config.flot0:
        plan = flot0_plan(C, config.params.effective_epsilon)
    else:
        plan = sinkhorn(C, config.params)
    t3 = time.perf_counter()
    est = interpolate_flow(plan, pair.source, pair.target, config.tau)
    t4 = time.perf_counter()
    refined = None
    if config.refine_rounds:
        refined = smooth_refine(est.raw, pair.source, config.refine_m, config.refine_rounds)
    t5 = time.perf_counter()
    est = FlowEstimate(est.raw, refined, est.fallback_count)

    for name, a, b in (("features", t0, t1), ("cost", t1, t2), ("transport", t2, t3),
                       ("interpolate", t3, t4), ("refine", t4, t5), ("total", t0, t5)):
        timing[name] = 1e3 * (b - a)
    row_res, col_res = marginal_residuals(plan)
    metrics = None
    if pair.mask.any():
        metrics = evaluate(est.best, pair.truth, pair.mask).as_dict()
    p = config.params
    report = {
        "features": config.features,
        "params": {"epsilon": p.epsilon, "effective_epsilon": p.effective_epsilon,
                   "power": 0.0 if config.flot0 else p.power,
                   "iterations": 0 if config.flot0 else p.iterations,
                   "use_floor": p.use_floor, "flot0": config.flot0},
        "tau": config.tau,
        "d_max": config.d_max,
        "refine_rounds": config.refine_rounds,
        "n": pair.n,
        "fallback_count": est.fallback_count,
        "marginals": {"row_residual_max": row_res, "col_residual_max": col_res},
        "timing_ms": timing,
        "metrics": metrics,
    }
    return est, report


def _params_from_args(args) -> OtParams:
    kwargs = dict(iterations=args.iterations, use_floor=not args.no_epsilon_floor)
    if args.lam is not None:
        return OtParams.from_lambda(args.epsilon, args.lam, **kwargs)
    power = DEFAULT_POWER if args.power is None else args.power
    return OtParams(args.epsilon, power, **kwargs)


def cmd_estimate(args) -> int:
    try:
        params = _params_from_args(args)
    except ValueError as exc:
        raise _Usage(str(exc))
    config = RunConfig(args.features, params, args.flot0, args.tau,
                       args.refine_rounds, args.refine_m, args.m, args.d_max)
    pair = io.read_scene(args.manifest)
    if config.features == "oracle" and pair.permutation is None:
        raise io.DataError("oracle features need a scene with a permutation file")
    est, report = run_estimate(pair, config)
    report["manifest"] = str(args.manifest)
    io.write_flow(args.out, est.best)
    _emit(_dump(report), args.report)
    return EXIT_OK


# -- eval --------------------------------------------------------------------

def cmd_eval(args) -> int:
    est = io.read_flow(args.estimate)
    truth = io.read_flow(args.truth)
    mask = io.read_mask(args.mask)
    if not (est.shape[0] == truth.shape[0] == mask.shape[0]):
        raise io.DataError(
            f"length mismatch: estimate {est.shape[0]}, truth {truth.shape[0]}, "
            f"mask {mask.shape[0]}"
        )
    _emit(_dump(evaluate(est, truth, mask).as_dict()), args.out)
    return EXIT_OK


# -- calibrate ---------------------------------------------------------------

def find_manifests(directory) -> List[Path]:
    return sorted(Path(directory).rglob(io.MANIFEST_NAME))


def cmd_calibrate(args) -> int:
    try:
        grid = CalibrationGrid(args.epsilons, args.powers, args.ks,
                               use_floor=not args.no_epsilon_floor)
    except ValueError as exc:
        raise _Usage(str(exc))
    if not Path(args.scene_dir).is_dir():
        raise io.DataError(f"{args.scene_dir}: not a directory")
    manifests = find_manifests(args.scene_dir)
    if not manifests:
        raise io.DataError(f"{args.scene_dir}: no {io.MANIFEST_NAME} found")
    scenes = [io.read_scene(m) for m in manifests]
    if args.features == "oracle" and any(s.permutation is None for s in scenes):
        raise io.DataError("oracle features need scenes with permutation files")
    result = grid_search(scenes, args.features, grid, m=args.m, d_max=args.d_max,
                         tau=args.tau)
    payload = result.as_dict()
    payload["scenes"] = [str(m) for m in manifests]
    payload["features"] = args.features
    if args.csv:
        buf = _io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(result.rows()[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(result.rows())
        io.atomic_write_text(args.csv, buf.getvalue())
    _emit(_dump(payload), args.out)
    return EXIT_OK


# -- bench -------------------------------------------------------------------

def bench_rows(sizes: Sequence[int], ks: Sequence[int], repeats: int = 3, seed: int = 0,
               epsilon: float = DEFAULT_EPSILON, power: float = 1.0) -> List[dict]:
    """Best-of-``repeats`` wall-clock of the transport solve on random costs."""
    rows = []
    for n in sizes:
        C = CostMatrix.from_array(seeded_rng(seed + n).uniform(0.0, 2.0, size=(n, n)))
        for k in ks:
            params = OtParams(epsilon, power, k)
            best = math.inf
            for _ in range(repeats):
                t0 = time.perf_counter_ns()
                sinkhorn(C, params)
                best = min(best, time.perf_counter_ns() - t0)
            rows.append({"n": n, "iterations": k, "seconds": max(best, 1) * 1e-9,
                         "repeats": repeats})
    return rows


def cmd_bench(args) -> int:
    if any(n < 1 for n in args.n) or any(k < 0 for k in args.k) or args.repeats < 1:
        raise _Usage("sizes and repeats must be >= 1, iteration counts >= 0")
    rows = bench_rows(args.n, args.k, args.repeats, args.seed, args.epsilon, args.power)
    buf = _io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["n", "iterations", "seconds", "repeats"],
                            lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({**row, "seconds": format(row["seconds"], ".9g")})
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


# -- parser ------------------------------------------------------------------

class _Usage(Exception):
    pass


def _add_pipeline_args(p):
    p.add_argument("--features", choices=["handcrafted", "oracle"], default="handcrafted")
    p.add_argument("--m", type=int, default=DEFAULT_NEIGHBOURS,
                   help="neighbourhood size of the handcrafted descriptor")
    p.add_argument("--d-max", type=float, default=DEFAULT_GATE_RADIUS,
                   help="gating radius in meters")
    p.add_argument("--tau", type=float, default=DEFAULT_TAU,
                   help="row-mass threshold below which the flow falls back to zero")
    p.add_argument("--no-epsilon-floor", action="store_true",
                   help=f"allow epsilon below {EPSILON_FLOOR}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="otflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene pair")
    p.add_argument("--regime", choices=["perfect", "resampled", "occluded"], required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rho", type=float, default=None, help="occluded fraction")
    p.add_argument("--pool", type=int, default=None, help="dense pool size (default 4n)")
    p.add_argument("--jitter", type=float, default=0.01)
    p.add_argument("--max-rotation", type=float, default=15.0, help="degrees")
    p.add_argument("--max-translation", type=float, default=1.0, help="meters")
    p.add_argument("--geometry", choices=["cube", "surface"], default="cube")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("estimate", help="estimate the flow of a scene pair")
    p.add_argument("manifest")
    _add_pipeline_args(p)
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--power", type=float, help="lambda / (lambda + epsilon)")
    group.add_argument("--lambda", dest="lam", type=_lambda, help="mass weight, or 'inf'")
    group.add_argument("--flot0", action="store_true", help="unscaled kernel, no iterations")
    p.add_argument("--iterations", "-K", type=int, default=DEFAULT_ITERATIONS)
    p.add_argument("--refine-rounds", type=int, default=0)
    p.add_argument("--refine-m", type=int, default=8)
    p.add_argument("--out", required=True, help="flow output file")
    p.add_argument("--report", help="JSON report file (default: stdout)")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("eval", help="score a flow estimate")
    p.add_argument("estimate")
    p.add_argument("truth")
    p.add_argument("mask")
    p.add_argument("--out", help="JSON output file (default: stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("calibrate", help="grid-search transport parameters")
    p.add_argument("scene_dir")
    _add_pipeline_args(p)
    p.add_argument("--epsilons", type=_float_list, default=list(DEFAULT_EPSILONS))
    p.add_argument("--powers", type=_float_list, default=list(DEFAULT_POWERS))
    p.add_argument("--ks", type=_int_list, default=list(DEFAULT_KS))
    p.add_argument("--out", help="JSON output file (default: stdout)")
    p.add_argument("--csv", help="per-candidate CSV table")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("bench", help="time the transport solve")
    p.add_argument("--n", type=_int_list, default=[512, 1024, 2048])
    p.add_argument("--k", type=_int_list, default=[1, 3, 5])
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--power", type=float, default=1.0)
    p.add_argument("--out", help="CSV output file (default: stdout)")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _Usage as exc:
        parser.print_usage(sys.stderr)
        print(f"otflow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DegenerateCost, Infeasible) as exc:
        print(f"otflow: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except EmptyEvaluation as exc:
        print(f"otflow: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (OtflowError, OSError, ValueError) as exc:
        print(f"otflow: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
