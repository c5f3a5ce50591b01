"""Evaluation metrics for prediction marginals and planned trajectories.

Collision rates are cumulative per horizon timestamp: a collision first
occurring between waypoints is attributed to the later waypoint's
timestamp (interpolated poses are checked at chord midpoints). Rates
are per-mille for prediction (actor-level) and percent for planning
(scene-level), matching the scale conventions of the two tasks.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from . import geometry, kernels
from .errors import ContractViolation

MIN_MSD_TOP_K = 12


@dataclass(frozen=True)
class PredictionMetrics:
    timestamps: tuple
    l2: tuple  # mean L2 error of the most-likely sample, per timestamp
    collision_rate_permille: tuple  # cumulative, per timestamp
    min_msd: float  # mean over actors, min over top-k samples
    min_msd_top_k: int
    num_actors: int

    def to_json_dict(self) -> dict:
        return {
            "timestamps": list(self.timestamps),
            "l2": list(self.l2),
            "collision_rate_permille": list(self.collision_rate_permille),
            "min_msd": self.min_msd,
            "min_msd_top_k": self.min_msd_top_k,
            "num_actors": self.num_actors,
        }


@dataclass(frozen=True)
class PlanningMetrics:
    timestamps: tuple
    collision_rate_percent: tuple  # cumulative, per timestamp
    lane_violation_percent: float
    l2_to_expert: tuple  # mean, per timestamp
    num_scenes: int

    def to_json_dict(self) -> dict:
        return {
            "timestamps": list(self.timestamps),
            "collision_rate_percent": list(self.collision_rate_percent),
            "lane_violation_percent": self.lane_violation_percent,
            "l2_to_expert": list(self.l2_to_expert),
            "num_scenes": self.num_scenes,
        }


def _future_times(grid) -> np.ndarray:
    return grid.times[1:]


def _hit_time(step: int, times: np.ndarray) -> float:
    """Timestamp a first-hit step index maps to (latest bounding waypoint)."""
    return float(times[kernels.step_to_time_index(step)])


def eval_prediction(scenes, marginals_per_scene, actor_sets_per_scene) -> PredictionMetrics:
    """Most-likely L2, cumulative collision rate, and top-k minMSD.

    The most-likely sample is each actor's marginal argmax; the
    prediction collision rate counts actors whose most-likely trajectory
    collides with another actor's most-likely trajectory by each
    timestamp. minMSD takes the k highest-probability samples per actor
    (k = 12, or all samples when K < 12) and reports the smallest mean
    squared displacement to the ground truth among them.
    """
    if not (len(scenes) == len(marginals_per_scene) == len(actor_sets_per_scene)):
        raise ContractViolation("scenes, marginals and actor sets must align")
    if not scenes:
        return PredictionMetrics((), (), (), 0.0, MIN_MSD_TOP_K, 0)
    times = _future_times(scenes[0].grid)
    n_t = len(times)
    l2_sum = np.zeros(n_t)
    collide_by_t = np.zeros(n_t)
    msd_sum = 0.0
    top_k_used = MIN_MSD_TOP_K
    total_actors = 0
    for scene, marginals, sets in zip(scenes, marginals_per_scene, actor_sets_per_scene):
        marginals = np.asarray(marginals)
        n = len(scene.actors)
        if marginals.shape[0] != n or len(sets) != n:
            raise ContractViolation("per-scene marginals/actor sets do not match actor count")
        total_actors += n
        chosen = [sets[i].trajectory(int(np.argmax(marginals[i]))) for i in range(n)]
        for i, actor in enumerate(scene.actors):
            gt = actor.gt_future.waypoints[1:, :2]
            pred = chosen[i].waypoints[1:, :2]
            l2_sum += np.hypot(*(pred - gt).T)
            k = min(MIN_MSD_TOP_K, marginals.shape[1])
            top_k_used = min(top_k_used, k)
            top = np.argsort(-marginals[i], kind="stable")[:k]
            disp2 = np.sum(
                (sets[i].waypoints[top][:, 1:, :2] - gt[None]) ** 2, axis=2
            ).mean(axis=1)
            msd_sum += float(disp2.min())
        first_hit = np.full(n, np.inf)
        for i in range(n):
            for j in range(i + 1, n):
                step = geometry.trajectory_first_hit(
                    chosen[i], scene.actors[i].footprint, chosen[j], scene.actors[j].footprint
                )
                if step >= 0:
                    t_hit = _hit_time(step, scene.grid.times)
                    first_hit[i] = min(first_hit[i], t_hit)
                    first_hit[j] = min(first_hit[j], t_hit)
        collide_by_t += (first_hit[:, None] <= times[None, :] + 1e-12).sum(axis=0)
    if total_actors == 0:
        return PredictionMetrics(tuple(times), (0.0,) * n_t, (0.0,) * n_t, 0.0, top_k_used, 0)
    return PredictionMetrics(
        timestamps=tuple(float(t) for t in times),
        l2=tuple(l2_sum / total_actors),
        collision_rate_permille=tuple(1000.0 * collide_by_t / total_actors),
        min_msd=msd_sum / total_actors,
        min_msd_top_k=top_k_used,
        num_actors=total_actors,
    )


def eval_planning(scenes, plans) -> PlanningMetrics:
    """Collision vs ground-truth futures, lane violation, L2 to expert."""
    if len(scenes) != len(plans):
        raise ContractViolation("one plan per scene required")
    if not scenes:
        return PlanningMetrics((), (), 0.0, (), 0)
    times = _future_times(scenes[0].grid)
    n_t = len(times)
    l2_sum = np.zeros(n_t)
    collide_by_t = np.zeros(n_t)
    violations = 0
    for scene, plan in zip(scenes, plans):
        traj = plan.trajectory
        t_first = np.inf
        for actor in scene.actors:
            step = geometry.trajectory_first_hit(
                traj, scene.ego_footprint, actor.gt_future, actor.footprint
            )
            if step >= 0:
                t_first = min(t_first, _hit_time(step, scene.grid.times))
        collide_by_t += t_first <= times + 1e-12
        hit = geometry.lane_violation_first_hit(
            traj.waypoints, scene.ego_footprint, scene.route_lanes()
        )
        violations += int(hit >= 0)
        l2_sum += np.hypot(*(traj.waypoints[1:, :2] - scene.expert.waypoints[1:, :2]).T)
    n_scenes = len(scenes)
    return PlanningMetrics(
        timestamps=tuple(float(t) for t in times),
        collision_rate_percent=tuple(100.0 * collide_by_t / n_scenes),
        lane_violation_percent=100.0 * violations / n_scenes,
        l2_to_expert=tuple(l2_sum / n_scenes),
        num_scenes=n_scenes,
    )


def metrics_to_csv(prediction: PredictionMetrics = None, planning: PlanningMetrics = None) -> str:
    """Tidy CSV (metric, timestamp, value); scalars leave timestamp empty."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["metric", "timestamp", "value"])
    if prediction is not None:
        for t, v in zip(prediction.timestamps, prediction.l2):
            writer.writerow(["prediction_l2", t, repr(float(v))])
        for t, v in zip(prediction.timestamps, prediction.collision_rate_permille):
            writer.writerow(["prediction_collision_permille", t, repr(float(v))])
        writer.writerow(["prediction_min_msd", "", repr(float(prediction.min_msd))])
    if planning is not None:
        for t, v in zip(planning.timestamps, planning.l2_to_expert):
            writer.writerow(["planning_l2_to_expert", t, repr(float(v))])
        for t, v in zip(planning.timestamps, planning.collision_rate_percent):
            writer.writerow(["planning_collision_percent", t, repr(float(v))])
        writer.writerow(
            ["planning_lane_violation_percent", "", repr(float(planning.lane_violation_percent))]
        )
    return buf.getvalue()
