"""Command-line interface: generate scenarios, plan, simulate, and report."""
from __future__ import annotations

import argparse
import dataclasses
import sys
import time

import numpy as np

from . import io
from .boundaries import BoundaryDomainError, metrics_report, modified_cost, mse
from .feedback import (
    PlantSpec,
    make_graph_planner,
    make_superposition_planner,
    run_feedback,
    run_feedforward,
)
from .graph import plan as graph_plan
from .model import apply_ablation
from .scenarios import (
    DegenerateScenarioError,
    Scenario,
    ScenarioValidationError,
    gen_sawtooth,
    gen_square_well,
    gen_tumor_3d,
    gen_two_cut,
    validate_scenario,
)
from .superposition import assemble, solution_actions, solve

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3
EXIT_IO = 4


def _add_sampler_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, help="RNG seed override")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker count; 1 (sequential) is the reproducibility reference")
    parser.add_argument("--kf", type=int, help="node budget per search")
    parser.add_argument("--lambda", dest="lam", type=float, help="overcut penalty weight")
    parser.add_argument("--a", type=float, help="node-weight exponent")
    parser.add_argument("--b", type=float, help="power-weight sharpness")
    parser.add_argument("--eps-n", type=float, help="node-weight floor")
    parser.add_argument("--eps-l", type=float, help="position-weight floor")
    parser.add_argument("--eps-c", type=float, help="outer-loop improvement threshold")
    parser.add_argument("--max-runs", type=int, help="outer-loop run cap")
    parser.add_argument("--power-levels", type=int, help="discrete power level count")
    parser.add_argument("--power-max", type=float, help="top of the power range")
    parser.add_argument("--angle-count", type=int, help="discrete angles per tilt axis")
    parser.add_argument("--angle-max", type=float, help="max |tilt| in radians")


_SAMPLER_FLAG_FIELDS = {
    "seed": "seed",
    "kf": "k_f",
    "lam": "lam",
    "a": "a",
    "b": "b",
    "eps_n": "eps_n",
    "eps_l": "eps_L",
    "eps_c": "eps_c",
    "max_runs": "max_runs",
    "power_levels": "power_levels",
    "power_max": "power_max",
    "angle_count": "angle_count",
    "angle_max": "angle_max",
}


def _apply_sampler_flags(scenario: Scenario, args) -> Scenario:
    overrides = {}
    for flag, field in _SAMPLER_FLAG_FIELDS.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[field] = value
    sampler = dataclasses.replace(scenario.sampler, **overrides)
    seed = args.seed if getattr(args, "seed", None) is not None else scenario.seed
    return dataclasses.replace(scenario, sampler=sampler, seed=seed)


def _perturbation(scenario: Scenario, args) -> float:
    return args.perturb if args.perturb is not None else scenario.perturbation


def _replay(scenario: Scenario, actions) -> tuple[list[float], float]:
    """Predicted per-step costs and final MSE under nominal parameters."""
    surface = scenario.initial_surface
    costs = []
    for action in actions:
        surface = apply_ablation(surface, action, scenario.nominal_params).new_surface
        costs.append(modified_cost(surface, scenario.objective, scenario.sampler.lam).modified_cost)
    return costs, mse(surface, scenario.objective)


def _cmd_gen(args) -> int:
    desk = args.preset == "desk"
    kw = {"a": args.constraint_a, "b": args.constraint_b}
    if args.shape == "square-well":
        scenario = gen_square_well(n=50 if desk else args.n, **kw)
    elif args.shape == "sawtooth":
        scenario = gen_sawtooth(n=50 if desk else args.n, count=args.count, **kw)
    elif args.shape == "two-cut":
        scenario = gen_two_cut(n=50 if desk else args.n, **kw)
    else:
        grid = 30 if desk else args.grid
        scenario = gen_tumor_3d(nx=grid, ny=grid, margin=args.margin)
    if desk:
        scenario = scenario.with_sampler(dataclasses.replace(scenario.sampler, k_f=1000))
    scenario = _apply_sampler_flags(scenario, args)
    io.save_scenario(scenario, args.output)
    return EXIT_OK


def _plan_file(scenario: Scenario, algorithm: str) -> io.PlanFile:
    if algorithm == "graph":
        result = graph_plan(
            scenario.initial_surface,
            scenario.objective,
            scenario.constraint,
            scenario.sampler,
            scenario.nominal_params,
            np.random.default_rng(scenario.seed),
        )
        actions = result.actions
        conf_hash = io.config_hash(scenario.sampler)
    else:
        problem = assemble(
            scenario.initial_surface, scenario.objective, scenario.constraint,
            scenario.nominal_params,
        )
        solved = solve(problem, scenario.solver)
        actions = solution_actions(problem, solved.powers)
        conf_hash = io.config_hash(scenario.solver)
    costs, final_mse = _replay(scenario, actions)
    return io.PlanFile(
        algorithm=algorithm,
        seed=scenario.seed,
        config_hash=conf_hash,
        dt=scenario.nominal_params.dt,
        actions=actions,
        predicted_costs=costs,
        predicted_final_mse=final_mse,
    )


def _cmd_plan(args) -> int:
    scenario = _apply_sampler_flags(io.load_scenario(args.scenario), args)
    io.save_plan(_plan_file(scenario, args.algorithm), args.output)
    return EXIT_OK


def _report_dict(scenario: Scenario, report, perturbation: float, algorithm: str | None) -> dict:
    metrics = metrics_report(
        scenario.initial_surface, report.final_surface, scenario.objective, scenario.constraint
    )
    return {
        "mode": report.mode,
        "algorithm": algorithm,
        "perturbation": perturbation,
        "mse": metrics.mse,
        "violation_count": metrics.violation_count,
        "violation_fraction": metrics.violation_fraction,
        "removed_healthy_volume": metrics.removed_healthy_volume,
        "remaining_tumor_volume": metrics.remaining_tumor_volume,
        "original_tumor_volume": metrics.original_tumor_volume,
        "cuts_executed": report.cuts_executed,
        "wall_time_s": report.wall_time,
        "sampler_hash": io.config_hash(scenario.sampler),
        "solver_hash": io.config_hash(scenario.solver),
        "params": {"beta": scenario.nominal_params.beta, "phi": scenario.nominal_params.phi,
                   "w": scenario.nominal_params.w, "dt": scenario.nominal_params.dt},
        "seed": scenario.seed,
    }


def _cmd_simulate(args) -> int:
    scenario = io.load_scenario(args.scenario)
    plan = io.load_plan(args.plan)
    perturbation = _perturbation(scenario, args)
    plant = PlantSpec(scenario.nominal_params, perturbation)
    report = run_feedforward(
        plan.actions, plant, scenario.initial_surface, scenario.objective, scenario.constraint
    )
    io.save_report(_report_dict(scenario, report, perturbation, plan.algorithm), args.output)
    if args.trace:
        io.write_trace_csv(report.trace, scenario.dimension, args.trace)
    return EXIT_OK


def _cmd_feedback(args) -> int:
    scenario = _apply_sampler_flags(io.load_scenario(args.scenario), args)
    perturbation = _perturbation(scenario, args)
    plant = PlantSpec(scenario.nominal_params, perturbation)
    if args.algorithm == "graph":
        planner = make_graph_planner(
            scenario.objective, scenario.constraint, scenario.sampler, scenario.nominal_params
        )
    else:
        planner = make_superposition_planner(
            scenario.objective, scenario.constraint, scenario.nominal_params, scenario.solver
        )
    report = run_feedback(
        planner, plant, scenario.initial_surface, scenario.objective, scenario.constraint,
        max_cuts=args.max_cuts,
    )
    io.save_report(_report_dict(scenario, report, perturbation, args.algorithm), args.output)
    if args.trace:
        io.write_trace_csv(report.trace, scenario.dimension, args.trace)
    return EXIT_OK


def _cmd_metrics(args) -> int:
    scenario = io.load_scenario(args.scenario)
    final = io.read_surface_csv(args.surface, scenario.initial_surface.grid_shape)
    metrics = metrics_report(
        scenario.initial_surface, final, scenario.objective, scenario.constraint
    )
    io.save_report(
        {
            "mode": "metrics",
            "mse": metrics.mse,
            "violation_count": metrics.violation_count,
            "violation_fraction": metrics.violation_fraction,
            "removed_healthy_volume": metrics.removed_healthy_volume,
            "remaining_tumor_volume": metrics.remaining_tumor_volume,
            "original_tumor_volume": metrics.original_tumor_volume,
            "sampler_hash": io.config_hash(scenario.sampler),
        },
        args.output,
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ablateplan", description="Volumetric laser ablation planning and simulation."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate a benchmark scenario")
    p_gen.add_argument("shape", choices=["square-well", "sawtooth", "two-cut", "tumor-3d"])
    p_gen.add_argument("-o", "--output", required=True)
    p_gen.add_argument("--n", type=int, default=100, help="2D point count")
    p_gen.add_argument("--grid", type=int, default=100, help="3D grid side length")
    p_gen.add_argument("--count", type=int, default=3, help="sawtooth tooth count")
    p_gen.add_argument("--constraint-a", type=float, default=0.05,
                       help="constraint offset slope a in z_c = z_d - a|x| - b")
    p_gen.add_argument("--constraint-b", type=float, default=0.1,
                       help="constraint offset depth b")
    p_gen.add_argument("--margin", type=float, default=0.08, help="3D constraint margin")
    p_gen.add_argument("--preset", choices=["desk"], help="desk-scale preset for CI")
    _add_sampler_flags(p_gen)
    p_gen.set_defaults(func=_cmd_gen)

    p_plan = sub.add_parser("plan", help="run a planner on a scenario")
    p_plan.add_argument("algorithm", choices=["graph", "nlopt"])
    p_plan.add_argument("-s", "--scenario", required=True)
    p_plan.add_argument("-o", "--output", required=True)
    _add_sampler_flags(p_plan)
    p_plan.set_defaults(func=_cmd_plan)

    p_sim = sub.add_parser("simulate", help="feedforward execution of a saved plan")
    p_sim.add_argument("-s", "--scenario", required=True)
    p_sim.add_argument("-p", "--plan", required=True)
    p_sim.add_argument("-o", "--output", required=True)
    p_sim.add_argument("--perturb", type=float, help="plant parameter perturbation fraction")
    p_sim.add_argument("--trace", help="per-cut trace CSV path")
    p_sim.set_defaults(func=_cmd_simulate)

    p_fb = sub.add_parser("feedback", help="receding-horizon execution")
    p_fb.add_argument("algorithm", choices=["graph", "nlopt"])
    p_fb.add_argument("-s", "--scenario", required=True)
    p_fb.add_argument("-o", "--output", required=True)
    p_fb.add_argument("--perturb", type=float, help="plant parameter perturbation fraction")
    p_fb.add_argument("--trace", help="per-cut trace CSV path")
    p_fb.add_argument("--max-cuts", type=int, default=200)
    _add_sampler_flags(p_fb)
    p_fb.set_defaults(func=_cmd_feedback)

    p_met = sub.add_parser("metrics", help="metrics for an externally produced surface")
    p_met.add_argument("-s", "--scenario", required=True)
    p_met.add_argument("--surface", required=True)
    p_met.add_argument("-o", "--output", required=True)
    p_met.set_defaults(func=_cmd_metrics)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DegenerateScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ScenarioValidationError, BoundaryDomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except io.ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
