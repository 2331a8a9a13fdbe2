"""Steady-state Gaussian point-ablation model and laser-axis geometry.

A single cut is parameterized by the laser's incidence point on the
reference plane, its tilt from vertical, and its power. Every surface
point displaces parallel to the laser axis by an amount that falls off
as a Gaussian of its orthogonal distance to the axis, clamped at zero
below the threshold energy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "TissueParams",
    "LaserAction",
    "LaserAxis",
    "TissueSurface",
    "AblationOutcome",
    "axis_from_action",
    "orthogonal_distance",
    "point_displacement",
    "apply_ablation",
    "superposed_depth",
]


@dataclass(frozen=True)
class TissueParams:
    """Tissue/laser constants of the point-ablation model.

    beta: tissue density times ablation enthalpy (energy per unit depth).
    phi:  threshold energy below which no material is removed.
    w:    beam spot size (lateral Gaussian falloff scale).
    dt:   exposure time per cut.

    All values are in self-consistent model units.
    """

    beta: float
    phi: float
    w: float
    dt: float

    def __post_init__(self) -> None:
        if not self.beta > 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if self.phi < 0:
            raise ValueError(f"phi must be >= 0, got {self.phi}")
        if not self.w > 0:
            raise ValueError(f"w must be > 0, got {self.w}")
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")

    def scaled(self, beta_factor: float = 1.0, phi_factor: float = 1.0) -> "TissueParams":
        """Return a copy with beta and phi multiplied by the given factors."""
        return TissueParams(self.beta * beta_factor, self.phi * phi_factor, self.w, self.dt)


@dataclass(frozen=True)
class LaserAction:
    """One cut: incidence position on the reference plane, tilt(s), power.

    2D actions have one position coordinate and one angle; 3D actions have
    two of each (tilt about each lateral axis). Angles are radians from
    vertical, restricted to (-pi/2, pi/2).
    """

    position: tuple[float, ...]
    angles: tuple[float, ...]
    power: float

    def __post_init__(self) -> None:
        pos = tuple(float(v) for v in self.position)
        ang = tuple(float(v) for v in self.angles)
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "angles", ang)
        object.__setattr__(self, "power", float(self.power))
        if len(pos) not in (1, 2) or len(ang) != len(pos):
            raise ValueError(f"position/angles must both have length 1 or 2, got {pos}, {ang}")
        if self.power < 0:
            raise ValueError(f"power must be >= 0, got {self.power}")
        for a in ang:
            if not -math.pi / 2 < a < math.pi / 2:
                raise ValueError(f"angle {a} outside (-pi/2, pi/2)")

    @property
    def dim(self) -> int:
        return len(self.position) + 1

    @staticmethod
    def vertical(position, power: float) -> "LaserAction":
        """Vertical (zero-angle) cut at the given lateral position."""
        pos = (float(position),) if np.isscalar(position) else tuple(float(v) for v in position)
        return LaserAction(pos, (0.0,) * len(pos), power)


@dataclass(frozen=True)
class LaserAxis:
    """Infinite beam line: origin on the reference plane, downward unit direction."""

    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self) -> None:
        origin = np.asarray(self.origin, dtype=float)
        direction = np.asarray(self.direction, dtype=float)
        if abs(np.linalg.norm(direction) - 1.0) > 1e-12:
            raise ValueError("direction must be a unit vector")
        if direction[-1] >= 0:
            raise ValueError("direction must point into the tissue (negative vertical component)")
        origin.flags.writeable = False
        direction.flags.writeable = False
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "direction", direction)


class TissueSurface:
    """Ordered point cloud of the air-tissue boundary.

    Points are (x, z) in 2D or (x, y, z) in 3D, with z the vertical
    coordinate. Ordering is fixed at construction and preserved under
    ablation. Instances are immutable.
    """

    __slots__ = ("points", "grid_shape")

    def __init__(self, points, grid_shape: tuple[int, int] | None = None):
        pts = np.array(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] not in (2, 3):
            raise ValueError(f"points must be (n, 2) or (n, 3), got shape {pts.shape}")
        if pts.shape[0] == 0:
            raise ValueError("surface must contain at least one point")
        if grid_shape is not None:
            grid_shape = (int(grid_shape[0]), int(grid_shape[1]))
            if grid_shape[0] * grid_shape[1] != pts.shape[0]:
                raise ValueError("grid_shape does not match point count")
        pts.flags.writeable = False
        self.points = pts
        self.grid_shape = grid_shape

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def lateral(self) -> np.ndarray:
        """Lateral coordinates, shape (n, dim-1)."""
        return self.points[:, :-1]

    @property
    def heights(self) -> np.ndarray:
        """Vertical (z) coordinates, shape (n,)."""
        return self.points[:, -1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, TissueSurface):
            return NotImplemented
        return self.grid_shape == other.grid_shape and np.array_equal(self.points, other.points)

    def __repr__(self) -> str:
        return f"TissueSurface(n={self.n}, dim={self.dim}, grid_shape={self.grid_shape})"


@dataclass(frozen=True)
class AblationOutcome:
    """Result of one cut: the new surface and per-point displacements."""

    new_surface: TissueSurface
    per_point_displacement: np.ndarray
    max_displacement: float


def _axis_arrays(position: tuple[float, ...], angles: tuple[float, ...]):
    origin = np.array([*position, 0.0])
    direction = np.array([*(math.tan(a) for a in angles), -1.0])
    direction /= math.sqrt(direction @ direction)
    return origin, direction


def _displace_points(
    points: np.ndarray,
    origin: np.ndarray,
    direction: np.ndarray,
    power: float,
    params: TissueParams,
) -> np.ndarray:
    """Per-point cut depth along the beam line (single physics code path)."""
    v = points - origin
    along = v @ direction
    perp = v - along[:, None] * direction
    d2 = np.einsum("ij,ij->i", perp, perp)
    energy = power * params.dt * np.exp(-2.0 * d2 / (params.w * params.w))
    return np.maximum(0.0, energy - params.phi) / params.beta


def axis_from_action(action: LaserAction) -> LaserAxis:
    """Beam line of an action: origin on the reference plane, tilted downward direction.

    In 2D the direction is (sin theta, -cos theta); in 3D the lateral
    components are tan(theta_x), tan(theta_y) against a unit downward
    component, normalized (which reduces to the 2D form when one tilt is
    zero).
    """
    return LaserAxis(*_axis_arrays(action.position, action.angles))


def orthogonal_distance(axis: LaserAxis, point) -> float | np.ndarray:
    """Perpendicular distance from point(s) to the infinite beam line.

    Accepts a single point of shape (D,) or a batch of shape (n, D).
    """
    p = np.asarray(point, dtype=float)
    single = p.ndim == 1
    v = np.atleast_2d(p) - axis.origin
    along = v @ axis.direction
    perp = v - np.outer(along, axis.direction)
    d = np.linalg.norm(perp, axis=1)
    return float(d[0]) if single else d


def point_displacement(params: TissueParams, power: float, d) -> float | np.ndarray:
    """Cut depth of a point at orthogonal distance d from the beam axis.

    Zero when the deposited energy is at or below the threshold phi.
    """
    d = np.asarray(d, dtype=float)
    energy = power * params.dt * np.exp(-2.0 * d * d / (params.w * params.w))
    dp = np.maximum(0.0, energy - params.phi) / params.beta
    return float(dp) if dp.ndim == 0 else dp


def apply_ablation(
    surface: TissueSurface, action: LaserAction, params: TissueParams
) -> AblationOutcome:
    """Apply one cut: every point moves along the beam direction by its depth.

    Returns a new surface; the input surface is never mutated.
    """
    if surface.dim != action.dim:
        raise ValueError(f"surface dim {surface.dim} != action dim {action.dim}")
    origin, direction = _axis_arrays(action.position, action.angles)
    dp = _displace_points(surface.points, origin, direction, action.power, params)
    new_points = surface.points + dp[:, None] * direction
    return AblationOutcome(
        new_surface=TissueSurface(new_points, surface.grid_shape),
        per_point_displacement=dp,
        max_displacement=float(dp.max()),
    )


def superposed_depth(xs, powers, params: TissueParams) -> np.ndarray:
    """Total depth at each position from simultaneous vertical cuts at xs.

    Depth at x_j is the clamped Gaussian contribution summed over all
    cuts i, using the kernel matrix P_ij = dt * exp(-2 (x_i - x_j)^2 / w^2).
    For vertical cuts this equals sequential per-cut simulation in any
    order.
    """
    xs = np.asarray(xs, dtype=float)
    powers = np.asarray(powers, dtype=float)
    if xs.shape != powers.shape or xs.ndim != 1:
        raise ValueError(f"xs and powers must be equal-length 1D, got {xs.shape}, {powers.shape}")
    diff = xs[:, None] - xs[None, :]
    p_mat = params.dt * np.exp(-2.0 * diff * diff / (params.w * params.w))
    return np.maximum(0.0, powers[:, None] * p_mat - params.phi).sum(axis=0) / params.beta
