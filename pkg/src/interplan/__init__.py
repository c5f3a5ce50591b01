"""Energy-based joint trajectory prediction with uncertainty-aware planning.

Pipeline: sample kinematic trajectory candidates per vehicle, score them
with linear unary energies plus pairwise collision penalties, run
sum-product message passing for per-vehicle marginals, then pick the ego
trajectory minimizing driving cost plus marginal-weighted collision
cost. Weights are trainable from demonstrations.
"""

from .energy import (
    CollisionEdges,
    EnergyWeights,
    FeatureVector,
    UnaryTable,
    build_collision_edges,
    build_unary_table,
    joint_energy,
)
from .errors import (
    ConfigError,
    ContractViolation,
    EnumerationBudgetError,
    GenerationError,
    InterplanError,
    SceneFormatError,
    TrainingDiverged,
)
from .geometry import (
    lane_violation,
    oriented_box_overlap,
    trajectories_collide,
    trajectory_first_hit,
)
from .inference import BPReport, exact_marginals, map_configuration, run_bp
from .lanes import LaneGeometry, Route, nearest_lane
from .learning import TrainConfig, TrainReport, gradient_check, train
from .metrics import PlanningMetrics, PredictionMetrics, eval_planning, eval_prediction
from .planner import PlannerWeights, PlanResult, ego_trajectory_set, plan
from .sampler import SamplerConfig, derive_seed, sample_trajectories
from .scenario import Actor, Scene, ScenarioTemplate, generate
from .types import Footprint, KinematicState, TimeGrid, Trajectory, TrajectorySet

__version__ = "0.1.0"

__all__ = [
    "Actor",
    "BPReport",
    "CollisionEdges",
    "ConfigError",
    "ContractViolation",
    "EnergyWeights",
    "EnumerationBudgetError",
    "FeatureVector",
    "Footprint",
    "GenerationError",
    "InterplanError",
    "KinematicState",
    "LaneGeometry",
    "PlanResult",
    "PlannerWeights",
    "PlanningMetrics",
    "PredictionMetrics",
    "Route",
    "SamplerConfig",
    "Scene",
    "SceneFormatError",
    "ScenarioTemplate",
    "TimeGrid",
    "TrainConfig",
    "TrainReport",
    "TrainingDiverged",
    "Trajectory",
    "TrajectorySet",
    "UnaryTable",
    "build_collision_edges",
    "build_unary_table",
    "derive_seed",
    "ego_trajectory_set",
    "eval_planning",
    "eval_prediction",
    "exact_marginals",
    "generate",
    "gradient_check",
    "joint_energy",
    "lane_violation",
    "map_configuration",
    "nearest_lane",
    "oriented_box_overlap",
    "plan",
    "run_bp",
    "sample_trajectories",
    "trajectories_collide",
    "trajectory_first_hit",
    "train",
]
