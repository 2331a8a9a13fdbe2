"""Feedforward and receding-horizon execution against a perturbed plant.

The plant applies the same ablation physics as the planners but with its
own (true) tissue parameters; planners only ever see the nominal ones.
Feedback mode re-plans from the exactly-sensed surface after every
executed cut.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .boundaries import BoundaryField, metrics_report, mse, violation
from .graph import SamplerConfig, search as graph_search
from .model import LaserAction, TissueParams, TissueSurface, apply_ablation
from .superposition import SolverConfig, assemble, solution_actions, solve

__all__ = [
    "PlantSpec",
    "TraceRow",
    "ExecutionReport",
    "run_feedforward",
    "run_feedback",
    "make_graph_planner",
    "make_superposition_planner",
]

DEFAULT_MAX_CUTS = 200

# A planner maps (sensed surface, iteration index) to an action sequence.
Planner = Callable[[TissueSurface, int], list[LaserAction]]


@dataclass(frozen=True)
class PlantSpec:
    """Plant with true parameters offset from the controller's nominal model.

    perturbation is a signed fraction applied once to beta and phi each;
    w and dt are never perturbed.
    """

    nominal_params: TissueParams
    perturbation: float = 0.0

    @property
    def true_params(self) -> TissueParams:
        f = 1.0 + self.perturbation
        return self.nominal_params.scaled(beta_factor=f, phi_factor=f)


@dataclass(frozen=True)
class TraceRow:
    """Per-cut execution record."""

    cut: int
    action: LaserAction
    mse: float
    violations: int


@dataclass(frozen=True)
class ExecutionReport:
    """Outcome of one execution: final state plus summary metrics."""

    mode: str
    final_surface: TissueSurface
    mse: float
    violation_fraction: float
    cuts_executed: int
    wall_time: float
    trace: list[TraceRow] = field(default_factory=list)


def _execute(
    mode: str,
    actions_iter,
    plant: PlantSpec,
    initial: TissueSurface,
    objective: BoundaryField,
    constraint: BoundaryField,
) -> ExecutionReport:
    start = time.perf_counter()
    surface = initial
    trace: list[TraceRow] = []
    cuts = 0
    true_params = plant.true_params
    for action in actions_iter:
        surface = apply_ablation(surface, action, true_params).new_surface
        cuts += 1
        count, _ = violation(surface, constraint)
        trace.append(TraceRow(cuts, action, mse(surface, objective), count))
    _, fraction = violation(surface, constraint)
    return ExecutionReport(
        mode=mode,
        final_surface=surface,
        mse=mse(surface, objective),
        violation_fraction=fraction,
        cuts_executed=cuts,
        wall_time=time.perf_counter() - start,
        trace=trace,
    )


def run_feedforward(
    plan_actions: list[LaserAction],
    plant: PlantSpec,
    initial: TissueSurface,
    objective: BoundaryField,
    constraint: BoundaryField,
) -> ExecutionReport:
    """Execute a precomputed plan on the plant without correction.

    Violations are recorded, never prevented: the plant has no interlock.
    """
    return _execute("feedforward", plan_actions, plant, initial, objective, constraint)


def run_feedback(
    planner: Planner,
    plant: PlantSpec,
    initial: TissueSurface,
    objective: BoundaryField,
    constraint: BoundaryField,
    max_cuts: int = DEFAULT_MAX_CUTS,
) -> ExecutionReport:
    """Receding-horizon execution: plan, apply the first action, sense, repeat.

    Sensing is perfect; the loop stops when the planner returns an empty
    plan or max_cuts is reached.
    """

    def first_actions():
        surface = initial
        true_params = plant.true_params
        for iteration in range(max_cuts):
            actions = planner(surface, iteration)
            if not actions:
                return
            yield actions[0]
            surface = apply_ablation(surface, actions[0], true_params).new_surface

    return _execute("feedback", first_actions(), plant, initial, objective, constraint)


def make_graph_planner(
    objective: BoundaryField,
    constraint: BoundaryField,
    config: SamplerConfig,
    nominal_params: TissueParams,
) -> Planner:
    """Graph-search planner handle for run_feedback.

    Each iteration runs one tree search from the sensed state with a
    fresh RNG seeded from (base seed, iteration), so repeated runs are
    reproducible but iterations are uncorrelated. The loop's own
    termination mirrors the open-loop outer loop: once a search improves
    the sensed cost by less than eps_c, an empty plan is returned.
    """
    state: dict[str, float | None] = {"eps_c": None}

    def planner(surface: TissueSurface, iteration: int) -> list[LaserAction]:
        rng = np.random.default_rng([config.seed, iteration])
        result = graph_search(
            surface, objective, constraint, config, nominal_params, rng,
            allow_root_violations=True,
        )
        if state["eps_c"] is None:
            state["eps_c"] = (
                config.eps_c if config.eps_c is not None else config.eps_c_rel * result.root_cost
            )
        if result.root_cost - result.best_cost < state["eps_c"]:
            return []
        return result.actions

    return planner


def make_superposition_planner(
    objective: BoundaryField,
    constraint: BoundaryField,
    nominal_params: TissueParams,
    solver_config: SolverConfig | None = None,
) -> Planner:
    """Superposition-optimizer planner handle for run_feedback.

    When the sensed surface matches the planner's own prediction exactly
    (the plant behaved as modeled), the shifted remainder of the previous
    solution is reused so the remaining plan is reproduced verbatim.
    Otherwise the optimizer re-solves with the remainder as a warm start,
    stopping once a re-solve improves on doing nothing by less than a
    small fraction of the initial depth error.
    """
    state: dict[str, np.ndarray | float | None] = {
        "warm": None,
        "predicted": None,
        "initial_residual": None,
    }
    floor = nominal_params.phi / nominal_params.dt

    def planner(surface: TissueSurface, iteration: int) -> list[LaserAction]:
        problem = assemble(surface, objective, constraint, nominal_params)
        warm = state["warm"]
        predicted = state["predicted"]
        if (
            warm is not None
            and predicted is not None
            and np.array_equal(surface.points, predicted)
        ):
            powers = warm
        else:
            warm_starts = (warm,) if warm is not None else ()
            result = solve(problem, solver_config, warm_starts=warm_starts)
            do_nothing = float(problem.target_depths @ problem.target_depths) / problem.n
            if state["initial_residual"] is None:
                state["initial_residual"] = do_nothing
            if do_nothing - result.residual_mse < 1e-4 * state["initial_residual"] + 1e-12:
                state["warm"] = None
                return []
            powers = result.powers
        # Powers at or below phi/dt displace nothing; emitting them would
        # make the loop execute no-op cuts forever.
        actions = solution_actions(problem, powers, power_floor=floor)
        if not actions:
            state["warm"] = None
            return []
        # Remainder after the first action is executed, and the surface the
        # model expects that action to leave behind.
        remainder = np.asarray(powers, dtype=float).copy()
        first_idx = int(np.argmax(remainder > floor))
        remainder[first_idx] = 0.0
        state["warm"] = remainder
        state["predicted"] = apply_ablation(
            surface, actions[0], nominal_params
        ).new_surface.points
        return actions

    return planner
