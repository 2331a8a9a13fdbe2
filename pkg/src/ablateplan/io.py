"""File formats: scenario/plan/report JSON (schema 1) and surface/trace CSV."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from pathlib import Path

import numpy as np

from .boundaries import BoundaryField
from .feedback import ExecutionReport, TraceRow
from .graph import SamplerConfig
from .model import LaserAction, TissueParams, TissueSurface
from .scenarios import Scenario, validate_scenario
from .superposition import SolverConfig

__all__ = [
    "ParseError",
    "PlanFile",
    "scenario_to_dict",
    "scenario_from_dict",
    "save_scenario",
    "load_scenario",
    "save_plan",
    "load_plan",
    "save_report",
    "write_surface_csv",
    "read_surface_csv",
    "write_trace_csv",
    "config_hash",
]

SCHEMA = 1


class ParseError(ValueError):
    """Malformed scenario/plan/surface file."""


def _require(data: dict, key: str, context: str):
    if key not in data:
        raise ParseError(f"{context}: missing field '{key}'")
    return data[key]


def _floats(values) -> list[float]:
    return [float(v) for v in np.asarray(values, dtype=float).tolist()]


def _field_to_dict(field: BoundaryField) -> dict:
    out = {"x": _floats(field.x), "z": np.asarray(field.z).tolist()}
    if field.y is not None:
        out["y"] = _floats(field.y)
    return out


def _field_from_dict(data: dict, context: str) -> BoundaryField:
    try:
        return BoundaryField(
            _require(data, "x", context), _require(data, "z", context), y=data.get("y")
        )
    except ValueError as exc:
        raise ParseError(f"{context}: {exc}") from exc


def _params_to_dict(params: TissueParams) -> dict:
    return {"beta": params.beta, "phi": params.phi, "w": params.w, "dt": params.dt}


def _params_from_dict(data: dict, context: str) -> TissueParams:
    try:
        return TissueParams(**{k: float(_require(data, k, context)) for k in ("beta", "phi", "w", "dt")})
    except ValueError as exc:
        raise ParseError(f"{context}: {exc}") from exc


def _action_to_dict(action: LaserAction) -> dict:
    return {"position": list(action.position), "angles": list(action.angles), "power": action.power}


def _action_from_dict(data: dict, context: str) -> LaserAction:
    try:
        return LaserAction(
            tuple(_require(data, "position", context)),
            tuple(_require(data, "angles", context)),
            float(_require(data, "power", context)),
        )
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{context}: {exc}") from exc


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "schema": SCHEMA,
        "kind": scenario.kind,
        "dimension": scenario.dimension,
        "initial_surface": {
            "points": scenario.initial_surface.points.tolist(),
            "grid_shape": list(scenario.initial_surface.grid_shape)
            if scenario.initial_surface.grid_shape
            else None,
        },
        "objective": _field_to_dict(scenario.objective),
        "constraint": _field_to_dict(scenario.constraint),
        "params": _params_to_dict(scenario.nominal_params),
        "perturbation": scenario.perturbation,
        "sampler": dataclasses.asdict(scenario.sampler),
        "solver": dataclasses.asdict(scenario.solver),
        "seed": scenario.seed,
    }


def scenario_from_dict(data: dict) -> Scenario:
    if _require(data, "schema", "scenario") != SCHEMA:
        raise ParseError(f"scenario: unsupported schema {data['schema']}")
    surf = _require(data, "initial_surface", "scenario")
    try:
        surface = TissueSurface(
            _require(surf, "points", "scenario.initial_surface"), surf.get("grid_shape")
        )
        sampler_raw = dict(_require(data, "sampler", "scenario"))
        for key in ("power_set", "angle_set"):
            if sampler_raw.get(key) is not None:
                sampler_raw[key] = tuple(sampler_raw[key])
        sampler = SamplerConfig(**sampler_raw)
        solver = SolverConfig(**_require(data, "solver", "scenario"))
    except (TypeError, ValueError) as exc:
        raise ParseError(f"scenario: {exc}") from exc
    scenario = Scenario(
        kind=str(_require(data, "kind", "scenario")),
        dimension=int(_require(data, "dimension", "scenario")),
        initial_surface=surface,
        objective=_field_from_dict(_require(data, "objective", "scenario"), "scenario.objective"),
        constraint=_field_from_dict(
            _require(data, "constraint", "scenario"), "scenario.constraint"
        ),
        nominal_params=_params_from_dict(_require(data, "params", "scenario"), "scenario.params"),
        perturbation=float(data.get("perturbation", 0.0)),
        sampler=sampler,
        solver=solver,
        seed=int(data.get("seed", 0)),
    )
    if scenario.dimension != surface.dim:
        raise ParseError("scenario: declared dimension does not match surface points")
    return scenario


def _dump_json(data: dict, path) -> None:
    Path(path).write_text(json.dumps(data, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _load_json(path, context: str) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"{context} {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ParseError(f"{context} {path}: expected a JSON object")
    return data


def save_scenario(scenario: Scenario, path) -> None:
    _dump_json(scenario_to_dict(scenario), path)


def load_scenario(path) -> Scenario:
    scenario = scenario_from_dict(_load_json(path, "scenario"))
    validate_scenario(scenario)
    return scenario


def config_hash(obj) -> str:
    """Stable hash of any JSON-serializable configuration payload."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        obj = dataclasses.asdict(obj)
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


@dataclasses.dataclass(frozen=True)
class PlanFile:
    """Serialized plan: actions plus provenance and replayable predicted costs."""

    algorithm: str
    seed: int
    config_hash: str
    dt: float
    actions: list[LaserAction]
    predicted_costs: list[float]
    predicted_final_mse: float


def save_plan(plan: PlanFile, path) -> None:
    _dump_json(
        {
            "schema": SCHEMA,
            "algorithm": plan.algorithm,
            "seed": plan.seed,
            "config_hash": plan.config_hash,
            "dt": plan.dt,
            "actions": [_action_to_dict(a) for a in plan.actions],
            "predicted_costs": plan.predicted_costs,
            "predicted_final_mse": plan.predicted_final_mse,
        },
        path,
    )


def load_plan(path) -> PlanFile:
    data = _load_json(path, "plan")
    if _require(data, "schema", "plan") != SCHEMA:
        raise ParseError(f"plan: unsupported schema {data['schema']}")
    return PlanFile(
        algorithm=str(_require(data, "algorithm", "plan")),
        seed=int(_require(data, "seed", "plan")),
        config_hash=str(_require(data, "config_hash", "plan")),
        dt=float(_require(data, "dt", "plan")),
        actions=[
            _action_from_dict(a, f"plan.actions[{i}]")
            for i, a in enumerate(_require(data, "actions", "plan"))
        ],
        predicted_costs=[float(c) for c in _require(data, "predicted_costs", "plan")],
        predicted_final_mse=float(_require(data, "predicted_final_mse", "plan")),
    )


def save_report(report: dict, path) -> None:
    _dump_json({"schema": SCHEMA, **report}, path)


def write_surface_csv(surface: TissueSurface, path) -> None:
    header = "x,z" if surface.dim == 2 else "x,y,z"
    lines = [header] + [",".join(repr(v) for v in row) for row in surface.points.tolist()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_surface_csv(path, grid_shape=None) -> TissueSurface:
    try:
        lines = Path(path).read_text(encoding="utf-8").strip().splitlines()
    except OSError as exc:
        raise ParseError(f"surface {path}: {exc}") from exc
    if not lines or lines[0] not in ("x,z", "x,y,z"):
        raise ParseError(f"surface {path}: expected header 'x,z' or 'x,y,z'")
    try:
        points = [[float(v) for v in line.split(",")] for line in lines[1:]]
        return TissueSurface(points, grid_shape)
    except ValueError as exc:
        raise ParseError(f"surface {path}: {exc}") from exc


def write_trace_csv(trace: list[TraceRow], dimension: int, path) -> None:
    if dimension == 2:
        header = "cut,x,theta,power,mse,violations"
    else:
        header = "cut,x,y,theta_x,theta_y,power,mse,violations"
    lines = [header]
    for row in trace:
        fields = (
            [row.cut]
            + list(row.action.position)
            + list(row.action.angles)
            + [row.action.power, row.mse, row.violations]
        )
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in fields))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
