"""Objective/constraint boundary fields and all cost, error, and volume metrics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import TissueSurface

__all__ = [
    "BoundaryDomainError",
    "BoundaryField",
    "CostBreakdown",
    "MetricsReport",
    "per_point_cost_terms",
    "modified_cost",
    "mse",
    "violation",
    "volume_metrics",
    "metrics_report",
]

DEFAULT_VIOLATION_TOL = 1e-9


class BoundaryDomainError(ValueError):
    """Raised when a lateral query falls outside a boundary field's knot range."""


class BoundaryField:
    """Interpolatable height field over a lateral knot grid.

    2D scenarios use 1D knots (x -> z, piecewise linear); 3D scenarios use
    a rectangular grid (x, y -> z, bilinear). Queries outside the knot
    range raise BoundaryDomainError unless clamp=True, which evaluates
    the nearest edge value (constant extension of the workspace).
    """

    __slots__ = ("x", "y", "z")

    def __init__(self, x, z, y=None):
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        if x.ndim != 1 or len(x) < 2 or np.any(np.diff(x) <= 0):
            raise ValueError("x knots must be 1D and strictly increasing")
        if y is None:
            if z.shape != x.shape:
                raise ValueError(f"heights shape {z.shape} != knots shape {x.shape}")
        else:
            y = np.asarray(y, dtype=float)
            if y.ndim != 1 or len(y) < 2 or np.any(np.diff(y) <= 0):
                raise ValueError("y knots must be 1D and strictly increasing")
            if z.shape != (len(x), len(y)):
                raise ValueError(f"heights shape {z.shape} != grid ({len(x)}, {len(y)})")
            y.flags.writeable = False
        if not np.all(np.isfinite(z)):
            raise ValueError("heights must be finite")
        x.flags.writeable = False
        z.flags.writeable = False
        self.x = x
        self.y = y
        self.z = z

    @property
    def is_grid(self) -> bool:
        return self.y is not None

    def _line(self, qx: np.ndarray, clamp: bool = False) -> np.ndarray:
        if not clamp and (qx.min() < self.x[0] or qx.max() > self.x[-1]):
            raise BoundaryDomainError("lateral query outside knot range")
        return np.interp(qx, self.x, self.z)

    def _grid(self, qx: np.ndarray, qy: np.ndarray, clamp: bool = False) -> np.ndarray:
        if clamp:
            qx = np.clip(qx, self.x[0], self.x[-1])
            qy = np.clip(qy, self.y[0], self.y[-1])
        elif (
            qx.min() < self.x[0]
            or qx.max() > self.x[-1]
            or qy.min() < self.y[0]
            or qy.max() > self.y[-1]
        ):
            raise BoundaryDomainError("lateral query outside knot range")
        ix = np.clip(np.searchsorted(self.x, qx, side="right") - 1, 0, len(self.x) - 2)
        iy = np.clip(np.searchsorted(self.y, qy, side="right") - 1, 0, len(self.y) - 2)
        tx = (qx - self.x[ix]) / (self.x[ix + 1] - self.x[ix])
        ty = (qy - self.y[iy]) / (self.y[iy + 1] - self.y[iy])
        z00 = self.z[ix, iy]
        z10 = self.z[ix + 1, iy]
        z01 = self.z[ix, iy + 1]
        z11 = self.z[ix + 1, iy + 1]
        return (
            z00 * (1 - tx) * (1 - ty)
            + z10 * tx * (1 - ty)
            + z01 * (1 - tx) * ty
            + z11 * tx * ty
        )

    def interpolate(self, lateral, clamp: bool = False) -> np.ndarray:
        """Height at each lateral query; shape (k,) for (k, D-1) queries."""
        q = np.atleast_2d(np.asarray(lateral, dtype=float))
        if self.y is None:
            if q.shape[1] != 1:
                raise ValueError(f"1D field queried with {q.shape[1]} lateral coordinates")
            return self._line(q[:, 0], clamp)
        if q.shape[1] != 2:
            raise ValueError(f"grid field queried with {q.shape[1]} lateral coordinates")
        return self._grid(q[:, 0], q[:, 1], clamp)

    def interpolate_lateral(self, lateral: np.ndarray, clamp: bool = False) -> np.ndarray:
        """interpolate() for a pre-validated (k, D-1) float array (hot path)."""
        if self.y is None:
            return self._line(lateral[:, 0], clamp)
        return self._grid(lateral[:, 0], lateral[:, 1], clamp)

    def contains(self, lateral) -> bool:
        """Whether every lateral query lies inside the knot range."""
        q = np.atleast_2d(np.asarray(lateral, dtype=float))
        qx = q[:, 0]
        ok = bool(np.all(qx >= self.x[0]) and np.all(qx <= self.x[-1]))
        if self.y is not None:
            qy = q[:, 1]
            ok = ok and bool(np.all(qy >= self.y[0]) and np.all(qy <= self.y[-1]))
        return ok

    def __eq__(self, other) -> bool:
        if not isinstance(other, BoundaryField):
            return NotImplemented
        if (self.y is None) != (other.y is None):
            return False
        return (
            np.array_equal(self.x, other.x)
            and (self.y is None or np.array_equal(self.y, other.y))
            and np.array_equal(self.z, other.z)
        )


@dataclass(frozen=True)
class CostBreakdown:
    """Modified objective cost split into undercut and overcut components."""

    modified_cost: float
    undercut_sq: float
    overcut_sq: float
    lam: float


@dataclass(frozen=True)
class MetricsReport:
    """Surface-vs-boundary evaluation metrics for a final state."""

    mse: float
    violation_count: int
    violation_fraction: float
    removed_healthy_volume: float
    remaining_tumor_volume: float
    original_tumor_volume: float


def _dz(surface: TissueSurface, objective: BoundaryField) -> np.ndarray:
    # dz > 0: surface below objective (overcut); dz < 0: undercut.
    # Clamped: a perturbed plant can push edge points slightly off the grid.
    return objective.interpolate_lateral(surface.lateral, clamp=True) - surface.heights


def per_point_cost_terms(
    surface: TissueSurface, objective: BoundaryField, lam: float
) -> np.ndarray:
    """Per-point contribution to the modified cost: dz^2, weighted lam if overcut."""
    dz = _dz(surface, objective)
    under = np.minimum(0.0, dz)
    over = np.maximum(0.0, dz)
    return under * under + lam * over * over


def modified_cost(surface: TissueSurface, objective: BoundaryField, lam: float) -> CostBreakdown:
    """Overcut-penalized squared error between the surface and the objective."""
    if lam < 1:
        raise ValueError(f"lambda must be >= 1, got {lam}")
    dz = _dz(surface, objective)
    under = np.minimum(0.0, dz)
    over = np.maximum(0.0, dz)
    undercut_sq = float(under @ under)
    overcut_sq = float(over @ over)
    return CostBreakdown(undercut_sq + lam * overcut_sq, undercut_sq, overcut_sq, lam)


def mse(surface: TissueSurface, objective: BoundaryField) -> float:
    """Mean squared z-error between the surface and the objective boundary."""
    dz = _dz(surface, objective)
    return float(dz @ dz) / surface.n


def violation(
    surface: TissueSurface,
    constraint: BoundaryField,
    tolerance: float = DEFAULT_VIOLATION_TOL,
) -> tuple[int, float]:
    """Count and fraction of points strictly below the constraint boundary.

    A point on the constraint (within tolerance) is not a violation.
    """
    zc = constraint.interpolate_lateral(surface.lateral, clamp=True)
    count = int(np.count_nonzero(surface.heights < zc - tolerance))
    return count, count / surface.n


def _integrate(values: np.ndarray, initial: TissueSurface) -> float:
    """Prismatic (trapezoidal) integral of per-point values over the initial lateral grid."""
    lateral = initial.lateral
    if initial.dim == 2:
        order = np.argsort(lateral[:, 0])
        return float(np.trapezoid(values[order], lateral[order, 0]))
    if initial.grid_shape is None:
        raise ValueError("3D volume integration requires a grid-initialized surface")
    nx, ny = initial.grid_shape
    xs = lateral[:, 0].reshape(nx, ny)[:, 0]
    ys = lateral[:, 1].reshape(nx, ny)[0, :]
    grid = values.reshape(nx, ny)
    return float(np.trapezoid(np.trapezoid(grid, ys, axis=1), xs))


def volume_metrics(
    initial: TissueSurface, final: TissueSurface, objective: BoundaryField
) -> tuple[float, float, float]:
    """(removed healthy, remaining tumor, original tumor) volumes.

    Tumor is the region between the initial surface and the objective;
    removed-healthy is the region cut past the objective. Integration is
    prismatic over the initial surface's lateral grid, with final heights
    read per point index.
    """
    if initial.n != final.n or initial.dim != final.dim:
        raise ValueError("initial and final surfaces must share point ordering")
    z_obj = objective.interpolate(initial.lateral)
    z_init = initial.heights
    z_fin = final.heights
    removed_healthy = _integrate(np.maximum(0.0, z_obj - z_fin), initial)
    tumor_mask = (z_init > z_obj).astype(float)
    remaining_tumor = _integrate(np.maximum(0.0, z_fin - z_obj) * tumor_mask, initial)
    original_tumor = _integrate(np.maximum(0.0, z_init - z_obj), initial)
    return removed_healthy, remaining_tumor, original_tumor


def metrics_report(
    initial: TissueSurface,
    final: TissueSurface,
    objective: BoundaryField,
    constraint: BoundaryField,
    tolerance: float = DEFAULT_VIOLATION_TOL,
) -> MetricsReport:
    """Full metrics bundle for a final surface."""
    count, fraction = violation(final, constraint, tolerance)
    removed_healthy, remaining_tumor, original_tumor = volume_metrics(initial, final, objective)
    return MetricsReport(
        mse=mse(final, objective),
        violation_count=count,
        violation_fraction=fraction,
        removed_healthy_volume=removed_healthy,
        remaining_tumor_volume=remaining_tumor,
        original_tumor_volume=original_tumor,
    )
