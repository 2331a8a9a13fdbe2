"""Weighted-sampling graph search over ablation sequences.

Grows a tree whose nodes are tissue states and whose edges are single
cuts. Node, laser-position, and laser-power sampling are all weighted;
angles are sampled uniformly. Candidates that violate the constraint
boundary (or remove nothing) are rejected. An outer loop repeats
searches from the incumbent best state until the cost improvement drops
below a threshold.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .boundaries import (
    DEFAULT_VIOLATION_TOL,
    BoundaryField,
    per_point_cost_terms,
)
from .model import (
    LaserAction,
    TissueParams,
    TissueSurface,
    _axis_arrays,
    _displace_points,
)

__all__ = [
    "SamplerConfig",
    "PlanNode",
    "PlanTree",
    "SearchResult",
    "PlanResult",
    "node_weights",
    "position_weights",
    "predicted_power",
    "power_weights",
    "weighted_index",
    "default_power_set",
    "default_angle_set",
    "expand_once",
    "search",
    "plan",
]


@dataclass(frozen=True)
class SamplerConfig:
    """Tuning knobs for the graph search.

    a / eps_n weight node selection, eps_L weights laser positions, b
    sharpens power selection around the predicted power. power_set and
    angle_set may be given explicitly; otherwise they are derived from
    the initial state (power_levels uniform levels up to power_max, with
    power_max defaulting to twice the largest predicted single-cut
    power) and angle_count uniform tilts in [-angle_max, angle_max].
    eps_c=None means 1e-4 times the initial cost.
    """

    a: float = 2.0
    b: float = 1.0
    eps_n: float = 1e-6
    eps_L: float = 1e-6
    lam: float = 4.0
    power_set: tuple[float, ...] | None = None
    angle_set: tuple[float, ...] | None = None
    power_levels: int = 32
    power_max: float | None = None
    angle_count: int = 21
    angle_max: float = np.pi / 4
    k_f: int = 10_000
    eps_c: float | None = None
    eps_c_rel: float = 1e-4
    max_runs: int = 50
    attempt_factor: int = 50
    seed: int = 0
    violation_tol: float = DEFAULT_VIOLATION_TOL

    def __post_init__(self) -> None:
        if self.eps_n <= 0 or self.eps_L <= 0:
            raise ValueError("eps_n and eps_L must be > 0")
        if self.a < 0 or self.b < 0:
            raise ValueError("a and b must be >= 0")
        if self.k_f < 1:
            raise ValueError("k_f must be >= 1")
        if self.lam < 1:
            raise ValueError("lambda must be >= 1")
        if self.power_set is not None:
            ps = tuple(float(p) for p in self.power_set)
            if not ps or any(p < 0 for p in ps):
                raise ValueError("power_set must be nonempty with entries >= 0")
            object.__setattr__(self, "power_set", ps)
        if self.angle_set is not None:
            object.__setattr__(self, "angle_set", tuple(float(a) for a in self.angle_set))


@dataclass
class PlanNode:
    """One tree node: a feasible surface state and its path bookkeeping."""

    surface: TissueSurface
    cost: float
    point_terms: np.ndarray
    parent: int | None
    incoming_action: LaserAction | None
    depth: int
    point_cum: np.ndarray | None = None
    point_dz: np.ndarray | None = None


class PlanTree:
    """Append-only search tree with a growing cost buffer for fast sampling.

    Sampling weights only change when a node is inserted, so the node
    cumulative-weight table is cached between insertions; rejected
    expansion attempts reuse it.
    """

    def __init__(self, root_surface: TissueSurface, objective: BoundaryField,
                 constraint: BoundaryField, config: "SamplerConfig",
                 tolerated: np.ndarray | None = None):
        self.objective = objective
        self.constraint = constraint
        self.config = config
        self.lam = config.lam
        # Root points already below the constraint (sensed overshoot); candidates
        # may keep them violated but must never cut them deeper.
        self.tolerated = tolerated if tolerated is not None and tolerated.any() else None
        self.tolerated_idx = (
            np.flatnonzero(self.tolerated) if self.tolerated is not None else None
        )
        dz = (
            objective.interpolate_lateral(root_surface.lateral, clamp=True)
            - root_surface.heights
        )
        under = np.minimum(0.0, dz)
        over = np.maximum(0.0, dz)
        terms = under * under + config.lam * over * over
        root = PlanNode(root_surface, float(terms.sum()), terms, None, None, 0,
                        np.cumsum(terms + config.eps_L), dz)
        self.nodes: list[PlanNode] = [root]
        self._costs = np.empty(1024)
        self._costs[0] = root.cost
        self._node_cum: np.ndarray | None = None
        # Beam directions depend only on the (discrete) sampled angles.
        self._directions: dict[tuple[float, ...], np.ndarray] = {}
        # Power-selection cumsums depend only on (node, point); sampling
        # concentrates on few nodes, so the hit rate is high.
        self._power_cum: dict[tuple[int, int], np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def costs(self) -> np.ndarray:
        return self._costs[: len(self.nodes)]

    def node_cum(self) -> np.ndarray:
        """Cumulative node-selection weights, recomputed only after insertions."""
        if self._node_cum is None:
            self._node_cum = np.cumsum(
                node_weights(self.costs, self.config.a, self.config.eps_n)
            )
        return self._node_cum

    def insert(self, node: PlanNode) -> int:
        if node.point_cum is None:
            node.point_cum = np.cumsum(node.point_terms + self.config.eps_L)
        self.nodes.append(node)
        n = len(self.nodes)
        if n > len(self._costs):
            grown = np.empty(2 * len(self._costs))
            grown[: n - 1] = self._costs
            self._costs = grown
        self._costs[n - 1] = node.cost
        self._node_cum = None
        return n - 1

    def best_index(self) -> int:
        return int(np.argmin(self.costs))

    def path_actions(self, index: int) -> list[LaserAction]:
        """Actions from root to the given node, in execution order."""
        actions: list[LaserAction] = []
        node = self.nodes[index]
        while node.parent is not None:
            actions.append(node.incoming_action)
            node = self.nodes[node.parent]
        actions.reverse()
        return actions


def node_weights(costs, a: float, eps_n: float) -> np.ndarray:
    """Node-selection weights: (max cost - cost)^a + eps_n."""
    costs = np.asarray(costs, dtype=float)
    slack = costs.max() - costs
    if a == 2.0:  # float power is the hot-loop bottleneck; square directly
        w = slack * slack
    elif a == 1.0:
        w = slack
    elif a == 0.0:
        w = np.ones_like(slack)
    else:
        w = slack**a
    return w + eps_n


def position_weights(
    surface: TissueSurface, objective: BoundaryField, lam: float, eps_L: float
) -> np.ndarray:
    """Laser-position weights: per-point modified-cost term + eps_L."""
    return per_point_cost_terms(surface, objective, lam) + eps_L


def predicted_power(
    surface: TissueSurface, objective: BoundaryField, x_l, params: TissueParams
) -> float:
    """Power that ablates the point under the laser to the objective in one cut."""
    q = np.atleast_1d(np.asarray(x_l, dtype=float))
    z_d = float(objective.interpolate(q[None, :], clamp=True)[0])
    lateral = surface.lateral
    if surface.dim == 2:
        order = np.argsort(lateral[:, 0])
        z = float(np.interp(q[0], lateral[order, 0], surface.heights[order]))
    else:
        # Scattered 3D clouds: nearest surface point.
        idx = int(np.argmin(((lateral - q) ** 2).sum(axis=1)))
        z = float(surface.heights[idx])
    return _predicted_power_from_gap(z_d - z, params)


def _predicted_power_from_gap(gap: float, params: TissueParams) -> float:
    return (params.beta * abs(gap) + params.phi) / params.dt


def power_weights(power_set, e_p: float, b: float) -> np.ndarray:
    """Power-selection weights: exp(b * (max power - |power - predicted|))."""
    powers = np.asarray(power_set, dtype=float)
    return np.exp(b * (powers.max() - np.abs(powers - e_p)))


def weighted_index(weights: np.ndarray, rng: np.random.Generator) -> int:
    """Draw an index proportional to weights via cumulative inverse sampling."""
    cs = np.cumsum(weights)
    return int(np.searchsorted(cs, rng.random() * cs[-1], side="right"))


def default_power_set(
    surface: TissueSurface, objective: BoundaryField, params: TissueParams, config: SamplerConfig
) -> tuple[float, ...]:
    """power_levels uniform levels in [0, E_max] derived from the initial gaps."""
    if config.power_set is not None:
        return config.power_set
    if config.power_max is not None:
        e_max = config.power_max
    else:
        gaps = np.abs(objective.interpolate(surface.lateral, clamp=True) - surface.heights)
        e_max = 2.0 * max(_predicted_power_from_gap(float(g), params) for g in gaps)
    return tuple(np.linspace(0.0, e_max, config.power_levels))


def default_angle_set(config: SamplerConfig) -> tuple[float, ...]:
    if config.angle_set is not None:
        return config.angle_set
    return tuple(np.linspace(-config.angle_max, config.angle_max, config.angle_count))


def _cut_points(
    points: np.ndarray, position: tuple[float, ...], angles: tuple[float, ...],
    power: float, params: TissueParams,
) -> tuple[np.ndarray, np.ndarray, float]:
    """apply_ablation without object construction: (new points, depths, max depth)."""
    origin, direction = _axis_arrays(position, angles)
    dp = _displace_points(points, origin, direction, power, params)
    max_dp = float(dp.max())
    if max_dp <= 0.0:
        return points, dp, 0.0
    return points + dp[:, None] * direction, dp, max_dp


def _cum_index(cum: np.ndarray, rng: np.random.Generator) -> int:
    return int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))


def expand_once(
    tree: PlanTree,
    config: SamplerConfig,
    rng: np.random.Generator,
    params: TissueParams,
    power_set,
    angle_set,
) -> bool:
    """One sampling step of the tree search; returns whether a node was inserted.

    Samples a node, a laser position over that node's points, uniform
    angle(s), and a power weighted around the predicted power, then
    simulates the cut. The candidate is inserted only if it violates no
    constraints and removed material; rejections leave the tree
    unchanged.
    """
    node_idx = _cum_index(tree.node_cum(), rng)
    node = tree.nodes[node_idx]
    surface = node.surface
    points = surface.points

    point_idx = _cum_index(node.point_cum, rng)
    position = tuple(points[point_idx, :-1])
    if surface.dim == 2:
        angles = (angle_set[int(rng.integers(len(angle_set)))],)
    else:
        angles = (
            angle_set[int(rng.integers(len(angle_set)))],
            angle_set[int(rng.integers(len(angle_set)))],
        )

    power_set = np.asarray(power_set, dtype=float)
    power_cum = tree._power_cum.get((node_idx, point_idx))
    if power_cum is None:
        e_p = _predicted_power_from_gap(float(node.point_dz[point_idx]), params)
        weights = np.exp(config.b * (power_set.max() - np.abs(power_set - e_p)))
        power_cum = np.cumsum(weights)
        tree._power_cum[(node_idx, point_idx)] = power_cum
    power = float(power_set[_cum_index(power_cum, rng)])

    if power * params.dt <= params.phi:
        return False  # sub-threshold power cannot displace any point

    direction = tree._directions.get(angles)
    if direction is None:
        direction = _axis_arrays(position, angles)[1]
        tree._directions[angles] = direction
    origin = np.array([*position, 0.0])

    # The sampled beam point usually sees the largest displacement, so
    # checking it alone rejects most infeasible candidates before the
    # full-surface evaluation. Every rejection here is a subset of the
    # full check below, so the search outcome is unchanged.
    pt = points[point_idx]
    v = pt - origin
    along = float(v @ direction)
    d2 = float(v @ v) - along * along
    energy = power * params.dt * math.exp(-2.0 * max(0.0, d2) / (params.w * params.w))
    dp_pt = max(0.0, energy - params.phi) / params.beta
    if dp_pt > 0.0:
        if tree.tolerated is not None and tree.tolerated[point_idx]:
            return False  # would deepen a tolerated violation
        new_pt = pt + dp_pt * direction
        cx = tree.constraint.x
        if new_pt[0] < cx[0] or new_pt[0] > cx[-1]:
            return False
        cy = tree.constraint.y
        if cy is not None and (new_pt[1] < cy[0] or new_pt[1] > cy[-1]):
            return False
        z_c_pt = float(tree.constraint.interpolate_lateral(new_pt[None, :-1])[0])
        if new_pt[-1] < z_c_pt - config.violation_tol:
            return False
    if tree.tolerated_idx is not None:
        # Tolerated points must not move at all; checking just that subset
        # rejects most candidates before the full-surface displacement.
        dp_tol = _displace_points(points[tree.tolerated_idx], origin, direction, power, params)
        if dp_tol.max() > 0.0:
            return False
    dp = _displace_points(points, origin, direction, power, params)
    max_dp = dp.max()
    if max_dp <= 0.0:
        return False
    new_points = points + dp[:, None] * direction
    lateral = new_points[:, :-1]
    # A cut must not push material off the workspace edge; points already
    # outside (a perturbed plant can drift them there) may stay put.
    if not tree.constraint.contains(lateral[dp > 0.0]):
        return False
    z_new = new_points[:, -1]
    z_c = tree.constraint.interpolate_lateral(lateral, clamp=True)
    violating = z_new < z_c - config.violation_tol
    if violating.any():
        if tree.tolerated is None:
            return False
        if (violating & ~tree.tolerated).any() or dp[tree.tolerated].max() > 0.0:
            return False
    dz = tree.objective.interpolate_lateral(lateral, clamp=True) - z_new
    under = np.minimum(0.0, dz)
    over = np.maximum(0.0, dz)
    terms = under * under + config.lam * over * over
    action = LaserAction(position, angles, power)
    new_surface = TissueSurface(new_points, surface.grid_shape)
    child = PlanNode(
        new_surface, float(terms.sum()), terms, node_idx, action, node.depth + 1,
        point_dz=dz,
    )
    tree.insert(child)
    return True


@dataclass(frozen=True)
class SearchResult:
    actions: list[LaserAction]
    best_cost: float
    root_cost: float
    best_surface: TissueSurface
    tree_size: int
    attempts: int


@dataclass(frozen=True)
class PlanResult:
    actions: list[LaserAction]
    run_costs: list[float]
    final_surface: TissueSurface
    initial_cost: float


def search(
    initial: TissueSurface,
    objective: BoundaryField,
    constraint: BoundaryField,
    config: SamplerConfig,
    params: TissueParams,
    rng: np.random.Generator | None = None,
    power_set=None,
    angle_set=None,
    allow_root_violations: bool = False,
) -> SearchResult:
    """One tree search from the initial state: grow to k_f nodes, return the best.

    An attempt cap of attempt_factor * k_f bounds runtime when few
    feasible cuts exist. The initial state must be feasible unless
    allow_root_violations is set (receding-horizon replanning from a
    plant overshoot), in which case pre-existing violations are
    tolerated but never deepened and no new ones are admitted.
    """
    z_c = constraint.interpolate_lateral(initial.lateral, clamp=True)
    root_violating = initial.heights < z_c - config.violation_tol
    if root_violating.any() and not allow_root_violations:
        count = int(root_violating.sum())
        raise ValueError(f"initial surface violates the constraint at {count} points")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    if power_set is None:
        power_set = default_power_set(initial, objective, params, config)
    if angle_set is None:
        angle_set = default_angle_set(config)
    power_set = np.asarray(power_set, dtype=float)
    tree = PlanTree(initial, objective, constraint, config, tolerated=root_violating)
    attempts = 0
    cap = config.attempt_factor * config.k_f
    while len(tree) < config.k_f and attempts < cap:
        attempts += 1
        expand_once(tree, config, rng, params, power_set, angle_set)
    best = tree.best_index()
    return SearchResult(
        actions=tree.path_actions(best),
        best_cost=tree.nodes[best].cost,
        root_cost=tree.nodes[0].cost,
        best_surface=tree.nodes[best].surface,
        tree_size=len(tree),
        attempts=attempts,
    )


def plan(
    initial: TissueSurface,
    objective: BoundaryField,
    constraint: BoundaryField,
    config: SamplerConfig,
    params: TissueParams,
    rng: np.random.Generator | None = None,
) -> PlanResult:
    """Repeat searches, re-rooting at each best state, until improvement < eps_c.

    Each run discards the previous tree and searches afresh from the
    incumbent state; run best costs are nonincreasing by construction.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    power_set = default_power_set(initial, objective, params, config)
    angle_set = default_angle_set(config)
    current = initial
    actions: list[LaserAction] = []
    run_costs: list[float] = []
    initial_cost = None
    eps_c = config.eps_c
    for _ in range(config.max_runs):
        result = search(current, objective, constraint, config, params, rng, power_set, angle_set)
        if initial_cost is None:
            initial_cost = result.root_cost
            if eps_c is None:
                eps_c = config.eps_c_rel * initial_cost
        improvement = result.root_cost - result.best_cost
        if not result.actions or improvement <= 0:
            break
        actions.extend(result.actions)
        run_costs.append(result.best_cost)
        current = result.best_surface
        if improvement < eps_c:
            break
    if initial_cost is None:  # max_runs == 0
        initial_cost = float(per_point_cost_terms(initial, objective, config.lam).sum())
    return PlanResult(actions, run_costs, current, initial_cost)
