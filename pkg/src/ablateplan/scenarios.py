"""Benchmark scenario generation: 2D shapes, two-cut targets, 3D tumor grids."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .boundaries import BoundaryField, violation
from .graph import SamplerConfig
from .model import LaserAction, TissueParams, TissueSurface, apply_ablation
from .superposition import SolverConfig

__all__ = [
    "ScenarioValidationError",
    "DegenerateScenarioError",
    "Scenario",
    "gen_square_well",
    "gen_sawtooth",
    "gen_two_cut",
    "gen_tumor_3d",
    "validate_scenario",
    "TWO_CUT_PARAMS",
    "SHAPE_PARAMS_2D",
    "TUMOR_PARAMS_3D",
]

# Constants of the reference two-cut profile (cuts at x = -1, +1 with power 5).
TWO_CUT_PARAMS = TissueParams(beta=1.0, phi=1.5, w=math.sqrt(8.0), dt=1.0)
TWO_CUT_ACTIONS = (LaserAction.vertical(-1.0, 5.0), LaserAction.vertical(1.0, 5.0))

# Sharper beam for carved shapes and the 3D tumor, where features are sub-unit.
SHAPE_PARAMS_2D = TissueParams(beta=1.0, phi=0.2, w=0.5, dt=1.0)
TUMOR_PARAMS_3D = TissueParams(beta=1.0, phi=0.1, w=0.3, dt=1.0)

DEFAULT_CONSTRAINT_A = 0.05
DEFAULT_CONSTRAINT_B = 0.1


class ScenarioValidationError(ValueError):
    """Scenario boundaries or initial state break the required ordering."""


class DegenerateScenarioError(ValueError):
    """Generated scenario is trivial (e.g. the defining cuts remove nothing)."""


@dataclass(frozen=True)
class Scenario:
    """A complete planning problem plus its execution configuration."""

    kind: str
    dimension: int
    initial_surface: TissueSurface
    objective: BoundaryField
    constraint: BoundaryField
    nominal_params: TissueParams
    perturbation: float = 0.0
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    seed: int = 0

    def with_sampler(self, sampler: SamplerConfig) -> "Scenario":
        return replace(self, sampler=sampler)


def validate_scenario(scenario: Scenario) -> None:
    """Check constraint <= objective <= initial at every surface point and t=0 feasibility."""
    surface = scenario.initial_surface
    z_d = scenario.objective.interpolate(surface.lateral)
    z_c = scenario.constraint.interpolate(surface.lateral)
    bad = np.flatnonzero((z_c > z_d + 1e-12) | (z_d > surface.heights + 1e-12))
    if len(bad):
        locs = ", ".join(str(tuple(np.round(surface.lateral[i], 6))) for i in bad[:5])
        raise ScenarioValidationError(
            f"boundary ordering violated at {len(bad)} points (first: {locs})"
        )
    count, _ = violation(surface, scenario.constraint)
    if count:
        raise ScenarioValidationError(f"initial surface violates the constraint at {count} points")


def _flat_surface(extent: float, n: int) -> tuple[np.ndarray, TissueSurface]:
    xs = np.linspace(-extent / 2, extent / 2, n)
    return xs, TissueSurface(np.column_stack([xs, np.zeros(n)]))


def _offset_constraint(xs: np.ndarray, z_d: np.ndarray, a: float, b: float) -> BoundaryField:
    # z_c(x) = z_d(x) - a|x| - b: variable constraint depth, deeper away from center.
    return BoundaryField(xs, z_d - a * np.abs(xs) - b)


def _finish_2d(kind, xs, surface, z_d, a, b, params, **kw) -> Scenario:
    scenario = Scenario(
        kind=kind,
        dimension=2,
        initial_surface=surface,
        objective=BoundaryField(xs, z_d),
        constraint=_offset_constraint(xs, z_d, a, b),
        nominal_params=params,
        **kw,
    )
    validate_scenario(scenario)
    return scenario


def gen_square_well(
    extent: float = 4.0,
    depth: float = 1.0,
    well_width: float = 2.0,
    n: int = 100,
    a: float = DEFAULT_CONSTRAINT_A,
    b: float = DEFAULT_CONSTRAINT_B,
    params: TissueParams = SHAPE_PARAMS_2D,
    **kw,
) -> Scenario:
    """Flat surface with a centered rectangular well objective."""
    if extent <= 0 or depth <= 0 or well_width <= 0 or well_width > extent:
        raise ScenarioValidationError("square well needs 0 < well_width <= extent and depth > 0")
    xs, surface = _flat_surface(extent, n)
    z_d = np.where(np.abs(xs) <= well_width / 2, -depth, 0.0)
    return _finish_2d("square-well", xs, surface, z_d, a, b, params, **kw)


def gen_sawtooth(
    extent: float = 4.0,
    depth: float = 1.0,
    count: int = 3,
    n: int = 100,
    a: float = DEFAULT_CONSTRAINT_A,
    b: float = DEFAULT_CONSTRAINT_B,
    params: TissueParams = SHAPE_PARAMS_2D,
    **kw,
) -> Scenario:
    """Sawtooth objective with `count` teeth: linear ramps down, sharp resets."""
    if extent <= 0 or depth <= 0 or count < 1:
        raise ScenarioValidationError("sawtooth needs positive extent, depth, and count")
    xs, surface = _flat_surface(extent, n)
    period = extent / count
    phase = (xs - xs[0]) / period
    frac = phase - np.floor(phase)
    frac[-1] = 1.0  # close the last tooth at the right edge
    z_d = -depth * frac
    return _finish_2d("sawtooth", xs, surface, z_d, a, b, params, **kw)


def gen_two_cut(
    action1: LaserAction = TWO_CUT_ACTIONS[0],
    action2: LaserAction = TWO_CUT_ACTIONS[1],
    params: TissueParams = TWO_CUT_PARAMS,
    extent: float = 8.0,
    n: int = 100,
    a: float = DEFAULT_CONSTRAINT_A,
    b: float = DEFAULT_CONSTRAINT_B,
    **kw,
) -> Scenario:
    """Objective produced by forward-simulating two cuts on a flat surface."""
    xs, surface = _flat_surface(extent, n)
    state = surface
    total = 0.0
    for action in (action1, action2):
        outcome = apply_ablation(state, action, params)
        total += outcome.max_displacement
        state = outcome.new_surface
    if total <= 0.0:
        raise DegenerateScenarioError("two-cut actions ablate nothing")
    pts = state.points[np.argsort(state.points[:, 0])]
    if np.any(np.diff(pts[:, 0]) <= 0):
        raise DegenerateScenarioError("two-cut objective folds over itself")
    return _finish_2d("two-cut", pts[:, 0], TissueSurface(np.column_stack([pts[:, 0], np.zeros(n)])),
                      pts[:, 1], a, b, params, **kw)


@dataclass(frozen=True)
class BlobSpec:
    """One Gaussian component of the tumor shape."""

    cx: float = 0.0
    cy: float = 0.0
    sigma: float = 0.5
    amplitude: float = 1.0

    def analytic_volume(self) -> float:
        return self.amplitude * 2.0 * math.pi * self.sigma**2


@dataclass(frozen=True)
class TorusSpec:
    """Quarter-torus blood-vessel stand-in: horizontal circular arc with a round tube."""

    cx: float = 0.0
    cy: float = 0.0
    arc_radius: float = 0.35
    tube_radius: float = 0.12
    depth: float = -0.55
    angle_start: float = 0.0
    angle_span: float = math.pi / 2

    def top_surface(self, qx: np.ndarray, qy: np.ndarray) -> np.ndarray:
        """Highest z of the tube over each (x, y); -inf where the tube is absent."""
        ts = np.linspace(self.angle_start, self.angle_start + self.angle_span, 256)
        arc = np.column_stack([
            self.cx + self.arc_radius * np.cos(ts),
            self.cy + self.arc_radius * np.sin(ts),
        ])
        pts = np.column_stack([qx.ravel(), qy.ravel()])
        d2 = ((pts[:, None, :] - arc[None, :, :]) ** 2).sum(axis=2).min(axis=1)
        top = np.full(len(pts), -np.inf)
        inside = d2 <= self.tube_radius**2
        top[inside] = self.depth + np.sqrt(self.tube_radius**2 - d2[inside])
        return top.reshape(qx.shape)


def gen_tumor_3d(
    nx: int = 100,
    ny: int = 100,
    extent: float = 4.0,
    blobs: tuple[BlobSpec, ...] = (BlobSpec(),),
    torus: TorusSpec | None = TorusSpec(),
    up_fraction: float = 0.5,
    margin: float = 0.08,
    params: TissueParams = TUMOR_PARAMS_3D,
    **kw,
) -> Scenario:
    """Synthetic 3D tumor on a flat plane with a quarter-torus vessel constraint.

    The tumor shape is a sum of Gaussians split across the plane:
    initial = plane + up_fraction * shape, objective = plane minus the
    rest, so the tumor volume is exactly the region between them. The
    constraint is objective - margin, raised to the torus top wherever
    the vessel tube lies above that.
    """
    if not 0.0 <= up_fraction <= 1.0:
        raise ScenarioValidationError("up_fraction must be in [0, 1]")
    xs = np.linspace(-extent / 2, extent / 2, nx)
    ys = np.linspace(-extent / 2, extent / 2, ny)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    shape = np.zeros_like(gx)
    for blob in blobs:
        r2 = (gx - blob.cx) ** 2 + (gy - blob.cy) ** 2
        shape += blob.amplitude * np.exp(-r2 / (2.0 * blob.sigma**2))
    z_init = up_fraction * shape
    z_obj = -(1.0 - up_fraction) * shape
    z_con = z_obj - margin
    if torus is not None:
        top = torus.top_surface(gx, gy)
        if np.any(top >= z_init):
            raise ScenarioValidationError("torus tube intersects the initial surface")
        z_con = np.maximum(z_con, top)
    surface = TissueSurface(
        np.column_stack([gx.ravel(), gy.ravel(), z_init.ravel()]), grid_shape=(nx, ny)
    )
    scenario = Scenario(
        kind="tumor-3d",
        dimension=3,
        initial_surface=surface,
        objective=BoundaryField(xs, z_obj, y=ys),
        constraint=BoundaryField(xs, z_con, y=ys),
        nominal_params=params,
        **kw,
    )
    validate_scenario(scenario)
    return scenario
