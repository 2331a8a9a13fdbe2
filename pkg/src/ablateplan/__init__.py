"""Volumetric laser ablation planning: point-ablation model, planners, simulation."""

from .boundaries import (
    BoundaryDomainError,
    BoundaryField,
    CostBreakdown,
    MetricsReport,
    metrics_report,
    modified_cost,
    mse,
    violation,
    volume_metrics,
)
from .feedback import (
    ExecutionReport,
    PlantSpec,
    make_graph_planner,
    make_superposition_planner,
    run_feedback,
    run_feedforward,
)
from .graph import PlanResult, SamplerConfig, SearchResult, plan, search
from .model import (
    AblationOutcome,
    LaserAction,
    LaserAxis,
    TissueParams,
    TissueSurface,
    apply_ablation,
    axis_from_action,
    orthogonal_distance,
    point_displacement,
    superposed_depth,
)
from .scenarios import (
    BlobSpec,
    DegenerateScenarioError,
    Scenario,
    ScenarioValidationError,
    TorusSpec,
    gen_sawtooth,
    gen_square_well,
    gen_tumor_3d,
    gen_two_cut,
    validate_scenario,
)
from .superposition import (
    SolveResult,
    SolverConfig,
    SuperpositionProblem,
    assemble,
    forward,
    solution_actions,
    solve,
)

__version__ = "0.1.0"
