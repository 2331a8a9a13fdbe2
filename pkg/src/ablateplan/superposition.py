"""Vertical-cut superposition planner.

With all cuts vertical and at most one cut per surface point, total
depth is linear superposition of clamped Gaussian kernels. This module
assembles the kernel matrix, evaluates the forward depth model, and
solves for nonnegative per-position powers minimizing the depth error
subject to the constraint boundary, via projected gradient descent on a
penalized objective with multiple starts.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boundaries import BoundaryField
from .model import LaserAction, TissueParams, TissueSurface

__all__ = [
    "SuperpositionProblem",
    "SolverConfig",
    "SolveResult",
    "assemble",
    "forward",
    "solve",
    "solution_actions",
]

FEAS_TOL = 1e-9


@dataclass(frozen=True)
class SuperpositionProblem:
    """Discrete vertical-cut problem: positions, kernel matrix, depth targets."""

    xs: np.ndarray
    p_matrix: np.ndarray
    target_depths: np.ndarray
    constraint_depths: np.ndarray
    params: TissueParams
    target_clamped: bool = False

    @property
    def n(self) -> int:
        return len(self.xs)


@dataclass(frozen=True)
class SolverConfig:
    """Projected-gradient solver settings."""

    max_iters: int = 5000
    rel_tol: float = 1e-10
    penalty_initial: float = 10.0
    penalty_factor: float = 10.0
    penalty_rounds: int = 4
    random_starts: int = 4
    seed: int = 0
    feas_tol: float = FEAS_TOL


@dataclass(frozen=True)
class SolveResult:
    """Best local minimum found: powers, the depths they achieve, and residual."""

    powers: np.ndarray
    achieved_depths: np.ndarray
    residual_mse: float
    feasible: bool
    iterations: int


def assemble(
    surface: TissueSurface,
    objective: BoundaryField,
    constraint: BoundaryField,
    params: TissueParams,
) -> SuperpositionProblem:
    """Build the kernel matrix and depth targets for a 2D surface.

    Target depths below zero (objective above the surface) are clamped to
    zero and flagged, since no cut can raise tissue.
    """
    if surface.dim != 2:
        raise ValueError("superposition planning supports 2D surfaces only")
    xs = surface.lateral[:, 0].copy()
    if len(np.unique(xs)) != len(xs):
        raise ValueError("surface points must have distinct lateral coordinates")
    diff = xs[:, None] - xs[None, :]
    p_matrix = params.dt * np.exp(-2.0 * diff * diff / (params.w * params.w))
    z = surface.heights
    raw_target = z - objective.interpolate(surface.lateral)
    clamped = bool(np.any(raw_target < 0))
    target = np.maximum(0.0, raw_target)
    constraint_depths = z - constraint.interpolate(surface.lateral)
    return SuperpositionProblem(xs, p_matrix, target, constraint_depths, params, clamped)


def forward(problem: SuperpositionProblem, powers) -> np.ndarray:
    """Depth at each position from the given nonnegative power vector."""
    powers = np.asarray(powers, dtype=float)
    if powers.shape != (problem.n,):
        raise ValueError(f"powers must have shape ({problem.n},), got {powers.shape}")
    contrib = np.maximum(0.0, powers[:, None] * problem.p_matrix - problem.params.phi)
    return contrib.sum(axis=0) / problem.params.beta


def _objective_and_grad(
    problem: SuperpositionProblem, powers: np.ndarray, mu: float
) -> tuple[float, np.ndarray, np.ndarray]:
    beta = problem.params.beta
    phi = problem.params.phi
    raw = powers[:, None] * problem.p_matrix - phi
    active = raw > 0.0
    depths = np.maximum(0.0, raw).sum(axis=0) / beta
    r = depths - problem.target_depths
    v = np.maximum(0.0, depths - problem.constraint_depths)
    f = float(r @ r + mu * (v @ v))
    # d depths_j / d E_i = P_ij / beta where the clamp is inactive (subgradient 0 at the kink).
    back = r + mu * v
    grad = 2.0 / beta * ((problem.p_matrix * active) @ back)
    return f, grad, depths


def _descend(
    problem: SuperpositionProblem, start: np.ndarray, config: SolverConfig
) -> tuple[np.ndarray, int]:
    powers = np.maximum(0.0, np.asarray(start, dtype=float).copy())
    iters = 0
    mu = config.penalty_initial
    for _ in range(config.penalty_rounds):
        f, grad, _ = _objective_and_grad(problem, powers, mu)
        prev_powers: np.ndarray | None = None
        prev_grad: np.ndarray | None = None
        for _ in range(config.max_iters):
            iters += 1
            g_max = float(np.abs(grad).max())
            if g_max == 0.0:
                break
            # Barzilai-Borwein step estimate; the Gaussian kernel is badly
            # conditioned and a fixed unit step converges hopelessly slowly.
            step = 1.0
            if prev_powers is not None:
                dp = powers - prev_powers
                dg = grad - prev_grad
                denom = float(dp @ dg)
                if denom > 0:
                    step = float(dp @ dp) / denom
            # Cap the step so one move cannot throw every power below the
            # ablation threshold, where the clamp zeroes the gradient and
            # descent would stall at a spurious stationary point.
            cap = max(float(powers.max()), 1.0) / g_max
            step = min(step, cap)
            improved = False
            for _ in range(60):
                candidate = np.maximum(0.0, powers - step * grad)
                f_new, grad_new, _ = _objective_and_grad(problem, candidate, mu)
                decrease = float((powers - candidate) @ grad)
                if f_new < f and f_new <= f - 1e-4 * decrease:
                    improved = True
                    break
                step *= 0.5
            if not improved:
                break
            converged = f - f_new < config.rel_tol * max(abs(f), 1e-30)
            prev_powers, prev_grad = powers, grad
            powers, f, grad = candidate, f_new, grad_new
            if converged:
                break
        mu *= config.penalty_factor
    return powers, iters


def _coord_tables(problem: SuperpositionProblem):
    """Residual-independent 1D-minimization tables, cached per problem.

    For each cut position the breakpoint order, sorted kernel row, its
    squared prefix sums, and the segment bounds depend only on the kernel
    matrix, so they are computed once and reused by every _best_power call.
    """
    tables = problem.__dict__.get("_coord_tables")
    if tables is None:
        beta = problem.params.beta
        phi = problem.params.phi
        n = problem.n
        order = np.empty((n, n), dtype=np.intp)
        qs = np.empty((n, n))
        sqq = np.empty((n, n))
        lo = np.empty((n, n))
        hi = np.empty((n, n))
        for i in range(n):
            q = problem.p_matrix[i] / beta
            bp = phi / problem.p_matrix[i] if phi > 0 else np.zeros(n)
            o = np.argsort(bp)
            order[i] = o
            qs[i] = q[o]
            bps = bp[o]
            sqq[i] = np.cumsum(qs[i] * qs[i])
            lo[i] = bps
            hi[i] = np.append(bps[1:], np.inf)
        tables = (order, qs, sqq, lo, hi)
        object.__setattr__(problem, "_coord_tables", tables)
    return tables


def _best_power(problem: SuperpositionProblem, i: int, resid0: np.ndarray) -> tuple[float, float]:
    """Exact minimizer over e >= 0 of the residual with cut i set to power e.

    resid0 is the depth residual with cut i removed. The objective is
    piecewise quadratic in e with one breakpoint per point (where that
    point's clamp activates), so the global 1D minimum is found by
    scanning segments with prefix sums.
    """
    order, qs_all, sqq_all, lo_all, hi_all = _coord_tables(problem)
    qs = qs_all[i]
    sqq = sqq_all[i]
    r0s = resid0[order[i]]
    cs = r0s - problem.params.phi / problem.params.beta
    scq = np.cumsum(cs * qs)
    scc = np.cumsum(cs * cs)
    rr = np.cumsum(r0s * r0s)
    total = float(rr[-1])
    rest = total - rr
    e = np.clip(-scq / np.maximum(sqq, 1e-300), lo_all[i], hi_all[i])
    f = scc + 2.0 * e * scq + e * e * sqq + rest
    k = int(np.argmin(f))
    if f[k] < total:
        return float(e[k]), float(f[k])
    return 0.0, total


def _cd_refine(
    problem: SuperpositionProblem, powers: np.ndarray, sweeps: int = 40
) -> np.ndarray:
    """Cyclic exact coordinate descent on the unconstrained depth residual.

    Each coordinate is minimized globally over its piecewise-quadratic
    1D objective, which steps across the ablation-threshold dead zone
    that stalls pure gradient moves.
    """
    E = powers.copy()
    depths = forward(problem, E)
    for _ in range(sweeps):
        changed = 0.0
        for i in range(problem.n):
            contrib = np.maximum(0.0, E[i] * problem.p_matrix[i] - problem.params.phi)
            base = depths - contrib / problem.params.beta
            e_new, _ = _best_power(problem, i, base - problem.target_depths)
            if e_new != E[i]:
                changed += abs(e_new - E[i])
                E[i] = e_new
                depths = base + (
                    np.maximum(0.0, e_new * problem.p_matrix[i] - problem.params.phi)
                    / problem.params.beta
                )
        if changed < 1e-14:
            break
    return E


def _pair_start(problem: SuperpositionProblem) -> np.ndarray:
    """Sparse start from exhaustive two-position enumeration.

    For every pair of cut positions, the two powers are optimized by
    alternating exact 1D minimization. A target generated by one or two
    vertical cuts is recovered exactly even when the kernels overlap,
    a regime where dense descent-based starts stall in shallow local
    minima.
    """
    target = problem.target_depths
    beta = problem.params.beta
    phi = problem.params.phi
    best_f = float(target @ target)
    best = np.zeros(problem.n)
    if best_f == 0.0:
        return best
    for i in range(problem.n):
        for j in range(i, problem.n):
            e_i = e_j = 0.0
            f = best_f
            for _ in range(8):
                depth_j = np.maximum(0.0, e_j * problem.p_matrix[j] - phi) / beta
                e_i_new, _ = _best_power(problem, i, depth_j - target)
                depth_i = np.maximum(0.0, e_i_new * problem.p_matrix[i] - phi) / beta
                e_j_new, f = _best_power(problem, j, depth_i - target)
                if e_i_new == e_i and e_j_new == e_j:
                    break
                e_i, e_j = e_i_new, e_j_new
            if f < best_f:
                best_f = f
                best = np.zeros(problem.n)
                best[i], best[j] = e_i, e_j
    return best


def _greedy_start(problem: SuperpositionProblem, steps: int = 8) -> np.ndarray:
    """Matched-pursuit start: repeatedly place the single best cut."""
    E = np.zeros(problem.n)
    depths = np.zeros(problem.n)
    for _ in range(steps):
        resid = depths - problem.target_depths
        best_f = float(resid @ resid)
        best_i, best_e = -1, 0.0
        for i in range(problem.n):
            contrib = np.maximum(0.0, E[i] * problem.p_matrix[i] - problem.params.phi)
            base = resid - contrib / problem.params.beta
            e_new, f_new = _best_power(problem, i, base)
            if f_new < best_f - 1e-15:
                best_f, best_i, best_e = f_new, i, e_new
        if best_i < 0:
            break
        old = np.maximum(0.0, E[best_i] * problem.p_matrix[best_i] - problem.params.phi)
        E[best_i] = best_e
        new = np.maximum(0.0, best_e * problem.p_matrix[best_i] - problem.params.phi)
        depths = depths + (new - old) / problem.params.beta
    return E


def solve(
    problem: SuperpositionProblem,
    config: SolverConfig | None = None,
    warm_starts: tuple[np.ndarray, ...] = (),
) -> SolveResult:
    """Multi-start descent on the penalized depth error.

    Cold solves descend the all-zero vector, the per-point predicted
    power, a greedy matched-pursuit vector, an exhaustive two-cut
    enumeration, and config.random_starts random nonnegative vectors.
    Warm re-solves are incremental: only the given warm starts and the
    all-zero baseline are descended. Each start is run through projected
    gradient descent, then exact coordinate-descent refinement, then a
    final penalized descent to restore constraint pressure. Returns the
    feasible local minimum with the lowest residual (ties broken by
    start order); feasible=False if no start satisfies the constraint.
    """
    if config is None:
        config = SolverConfig()
    params = problem.params
    predicted = (params.beta * problem.target_depths + params.phi) / params.dt
    starts: list[np.ndarray] = [np.asarray(ws, dtype=float) for ws in warm_starts]
    starts.append(np.zeros(problem.n))
    if not warm_starts:
        starts.append(predicted)
        starts.append(_greedy_start(problem))
        starts.append(_pair_start(problem))
        rng = np.random.default_rng(config.seed)
        scale = float(predicted.max()) if predicted.max() > 0 else 1.0
        for _ in range(config.random_starts):
            starts.append(rng.random(problem.n) * scale)

    best: SolveResult | None = None
    total_iters = 0

    def consider(powers: np.ndarray, iters: int) -> None:
        nonlocal best, total_iters
        total_iters += iters
        depths = forward(problem, powers)
        residual = depths - problem.target_depths
        result = SolveResult(
            powers=powers,
            achieved_depths=depths,
            residual_mse=float(residual @ residual) / problem.n,
            feasible=bool(np.all(depths <= problem.constraint_depths + config.feas_tol)),
            iterations=iters,
        )
        if best is None or _better(result, best):
            best = result

    for start in starts:
        powers, iters = _descend(problem, start, config)
        consider(powers, iters)
        refined = _cd_refine(problem, powers)
        polished, iters2 = _descend(problem, refined, config)
        consider(polished, iters2)
    assert best is not None
    return SolveResult(
        best.powers, best.achieved_depths, best.residual_mse, best.feasible, total_iters
    )


def _better(a: SolveResult, b: SolveResult) -> bool:
    if a.feasible != b.feasible:
        return a.feasible
    return a.residual_mse < b.residual_mse


def solution_actions(
    problem: SuperpositionProblem, powers, power_floor: float = 0.0
) -> list[LaserAction]:
    """Vertical-cut action list for a solved power vector (zero powers dropped).

    Order follows position index; for vertical cuts any order yields the
    same final surface.
    """
    powers = np.asarray(powers, dtype=float)
    return [
        LaserAction.vertical(problem.xs[i], powers[i])
        for i in range(problem.n)
        if powers[i] > power_floor
    ]
