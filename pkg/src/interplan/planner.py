"""Ego trajectory selection under predicted actor marginals.

The planner scores every sampled ego trajectory with a feature-linear
driving cost plus the expected collision cost against each actor's
marginal distribution, then takes the exact argmin over the sampled set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .errors import ContractViolation
from .sampler import SamplerConfig, sample_trajectories
from .types import COL_H, COL_X, COL_Y, KinematicState, TimeGrid, Trajectory, TrajectorySet
from .types import wrap_angle
from .lanes import Route

PLANNER_FEATURE_NAMES = (
    "route_lateral_offset",
    "route_heading_misalignment",
    "progress_shortfall",
    "mean_abs_accel",
    "mean_abs_curvature",
    "lane_violation",
)
NUM_PLANNER_FEATURES = len(PLANNER_FEATURE_NAMES)

# Hand-set driving-cost weights used when no trained weights are supplied.
REFERENCE_PLANNER_WEIGHTS = {
    "route_lateral_offset": 0.5,
    "route_heading_misalignment": 1.0,
    "progress_shortfall": 0.15,
    "mean_abs_accel": 0.15,
    "mean_abs_curvature": 6.0,
    "lane_violation": 4.0,
}


@dataclass
class PlannerWeights:
    """Linear driving-cost weights plus the collision cost scale lambda."""

    traj_cost_feature_weights: np.ndarray = field(
        default_factory=lambda: np.zeros(NUM_PLANNER_FEATURES)
    )
    collision_lambda: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.traj_cost_feature_weights, dtype=np.float64)
        if w.shape != (NUM_PLANNER_FEATURES,):
            raise ContractViolation(
                f"expected {NUM_PLANNER_FEATURES} planner weights, got shape {w.shape}"
            )
        if not (self.collision_lambda >= 0.0):
            raise ContractViolation(f"lambda must be >= 0, got {self.collision_lambda}")
        self.traj_cost_feature_weights = w
        self.collision_lambda = float(self.collision_lambda)

    def to_json_dict(self) -> dict:
        return {
            "traj_cost_feature_weights": {
                name: float(v)
                for name, v in zip(PLANNER_FEATURE_NAMES, self.traj_cost_feature_weights)
            },
            "lambda": self.collision_lambda,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "PlannerWeights":
        named = d["traj_cost_feature_weights"]
        missing = set(PLANNER_FEATURE_NAMES) - set(named)
        if missing:
            raise ContractViolation(f"weights file missing planner features: {sorted(missing)}")
        w = np.array([named[name] for name in PLANNER_FEATURE_NAMES], dtype=np.float64)
        return cls(traj_cost_feature_weights=w, collision_lambda=float(d["lambda"]))

    @classmethod
    def reference(cls, collision_lambda: float = 40.0) -> "PlannerWeights":
        w = np.array([REFERENCE_PLANNER_WEIGHTS[n] for n in PLANNER_FEATURE_NAMES])
        return cls(traj_cost_feature_weights=w, collision_lambda=collision_lambda)


@dataclass(frozen=True)
class PlanResult:
    """Chosen ego trajectory plus the full per-sample cost breakdown."""

    chosen_index: int
    trajectory: Trajectory
    traj_costs: np.ndarray
    collision_costs: np.ndarray

    @property
    def total_costs(self) -> np.ndarray:
        return self.traj_costs + self.collision_costs

    def to_json_dict(self) -> dict:
        return {
            "chosen_index": int(self.chosen_index),
            "chosen_total_cost": float(self.total_costs[self.chosen_index]),
            "traj_costs": [float(c) for c in self.traj_costs],
            "expected_collision_costs": [float(c) for c in self.collision_costs],
            "waypoints": [[float(v) for v in row] for row in self.trajectory.waypoints],
        }


def ego_trajectory_set(ego: KinematicState, cfg: SamplerConfig, grid: TimeGrid) -> TrajectorySet:
    """Ego candidates come from the same sampler as actor predictions."""
    return sample_trajectories(ego, cfg, grid)


def compute_ego_features(scene, tset: TrajectorySet) -> np.ndarray:
    """(K, NUM_PLANNER_FEATURES) route-relative driving-cost features.

    Progress shortfall is measured against constant-speed progress along
    the route (capped at the route end), so holding speed costs nothing
    and braking without need is penalized. Lane violation is the 0/1
    output of the boundary-crossing predicate against the route lanes.
    """
    route = Route(scene.route_lanes())
    wp = tset.waypoints
    K, T, _ = wp.shape
    pts = wp[:, :, (COL_X, COL_Y)].reshape(K * T, 2)
    s, lat, tangent = route.project(pts)
    s = s.reshape(K, T)
    lat_mean = np.abs(lat).reshape(K, T).mean(axis=1)
    mis = np.abs(wrap_angle(wp[:, :, COL_H].reshape(K * T) - tangent)).reshape(K, T).mean(axis=1)

    horizon = wp[0, -1, 3] - wp[0, 0, 3]
    ego = scene.ego_state
    s_target = min(float(s[:, 0].min()) + ego.speed * horizon, route.reference.length)
    shortfall = np.maximum(s_target - s[:, -1], 0.0)

    dx = np.diff(wp[:, :, COL_X], axis=1)
    dy = np.diff(wp[:, :, COL_Y], axis=1)
    chord = np.hypot(dx, dy)
    dh = wrap_angle(np.diff(wp[:, :, COL_H], axis=1))
    moving = chord > 1e-9
    kappa = np.where(moving, 2.0 * np.abs(np.sin(dh / 2.0)) / np.where(moving, chord, 1.0), 0.0)
    n_moving = moving.sum(axis=1)
    mean_kappa = np.where(n_moving > 0, kappa.sum(axis=1) / np.maximum(n_moving, 1), 0.0)

    dt = np.diff(wp[0, :, 3])
    speeds = chord / dt[None, :]
    if T >= 3:
        acc = np.diff(speeds, axis=1) / (0.5 * (dt[:-1] + dt[1:]))[None, :]
        mean_acc = np.abs(acc).mean(axis=1)
    else:
        mean_acc = np.zeros(K)

    hit = geometry.lane_violation_first_hit(wp, scene.ego_footprint, scene.route_lanes())
    violated = (hit >= 0).astype(np.float64)

    out = np.stack([lat_mean, mis, shortfall, mean_acc, mean_kappa, violated], axis=1)
    if not np.all(np.isfinite(out)):
        raise ContractViolation("non-finite planner feature")
    return out


def expected_collision_cost(
    tau: Trajectory,
    ego_footprint,
    marginals: np.ndarray,
    actor_sets,
    footprints,
    collision_lambda: float,
) -> float:
    """lambda-weighted probability mass of actor samples colliding with tau."""
    marginals = np.asarray(marginals, dtype=np.float64)
    if marginals.shape[0] != len(actor_sets) or len(actor_sets) != len(footprints):
        raise ContractViolation("marginals, actor_sets and footprints must align")
    ego_set = TrajectorySet(tau.waypoints[None, :, :], [tau.mode])
    total = 0.0
    for i, (aset, fp) in enumerate(zip(actor_sets, footprints)):
        hit = geometry.cross_first_hit(ego_set, ego_footprint, aset, fp)  # (1, K_i)
        total += float(marginals[i] @ (hit[0] >= 0))
    return collision_lambda * total


def collision_cost_vector(
    ego_set: TrajectorySet, ego_footprint, marginals, actor_sets, footprints, collision_lambda
) -> np.ndarray:
    """Expected collision cost of every ego sample at once: (K_ego,)."""
    marginals = np.asarray(marginals, dtype=np.float64)
    if marginals.shape[0] != len(actor_sets) or len(actor_sets) != len(footprints):
        raise ContractViolation("marginals, actor_sets and footprints must align")
    out = np.zeros(ego_set.num_samples)
    for i, (aset, fp) in enumerate(zip(actor_sets, footprints)):
        hit = geometry.cross_first_hit(ego_set, ego_footprint, aset, fp)  # (K_ego, K_i)
        out += (hit >= 0) @ marginals[i]
    return collision_lambda * out


def point_mass_marginals(marginals: np.ndarray) -> np.ndarray:
    """Collapse each actor's marginal onto its argmax sample (ablation input)."""
    marginals = np.asarray(marginals, dtype=np.float64)
    out = np.zeros_like(marginals)
    out[np.arange(marginals.shape[0]), np.argmax(marginals, axis=1)] = 1.0
    return out


def plan(scene, marginals, actor_sets, weights: PlannerWeights, ego_set: TrajectorySet) -> PlanResult:
    """Exact argmin of driving cost + expected collision cost over the ego set."""
    if ego_set.num_samples == 0:
        raise ContractViolation("empty ego trajectory set")
    feats = compute_ego_features(scene, ego_set)
    traj_costs = feats @ weights.traj_cost_feature_weights
    footprints = [a.footprint for a in scene.actors]
    coll_costs = collision_cost_vector(
        ego_set, scene.ego_footprint, marginals, actor_sets, footprints, weights.collision_lambda
    )
    chosen = int(np.argmin(traj_costs + coll_costs))
    return PlanResult(
        chosen_index=chosen,
        trajectory=ego_set.trajectory(chosen),
        traj_costs=traj_costs,
        collision_costs=coll_costs,
    )
