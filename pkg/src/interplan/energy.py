"""Energy tables for the joint trajectory distribution.

The joint energy over one sampled trajectory per actor splits into
per-actor unary terms (feature-linear plausibility scores) and pairwise
collision terms (a flat penalty gamma whenever two actors' samples
collide). Pairs that provably cannot interact inside the horizon are
pruned before any pairwise collision checks run.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .errors import ContractViolation
from .lanes import nearest_lane
from .types import COL_H, COL_X, COL_Y, TrajectorySet, wrap_angle

FEATURE_NAMES = (
    "lane_lateral_offset",
    "lane_heading_misalignment",
    "const_velocity_deviation",
    "mean_abs_curvature",
    "mean_abs_accel",
    "lane_progress",
)
NUM_FEATURES = len(FEATURE_NAMES)

# An actor farther than this many lane-widths from every centerline is
# flagged as off-lane; its lane-relative features still use the nearest lane.
OFF_LANE_FACTOR = 1.0

# Hand-set weights used when no trained weights file is supplied: favor
# lane-keeping, smooth constant-speed motion, and forward progress. The
# constant-velocity weight balances two pressures: sharp enough that
# extreme accel/brake tails carry little belief mass (weak pairwise
# coupling, fast message-passing settling), soft enough that evasive
# maneuvers keep visible probability for uncertainty-aware planning.
REFERENCE_UNARY_WEIGHTS = {
    "lane_lateral_offset": 0.6,
    "lane_heading_misalignment": 1.2,
    "const_velocity_deviation": 0.4,
    "mean_abs_curvature": 8.0,
    "mean_abs_accel": 0.2,
    "lane_progress": -0.03,
}


@dataclass(frozen=True)
class FeatureVector:
    """Per-(actor, sample) descriptors of trajectory plausibility."""

    values: np.ndarray
    off_lane: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (NUM_FEATURES,):
            raise ContractViolation(f"expected {NUM_FEATURES} features, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ContractViolation("non-finite feature value")
        object.__setattr__(self, "values", v)


@dataclass
class EnergyWeights:
    """Linear unary weights plus the pairwise collision penalty gamma."""

    unary_feature_weights: np.ndarray = field(
        default_factory=lambda: np.zeros(NUM_FEATURES)
    )
    gamma: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.unary_feature_weights, dtype=np.float64)
        if w.shape != (NUM_FEATURES,):
            raise ContractViolation(f"expected {NUM_FEATURES} unary weights, got shape {w.shape}")
        if not (self.gamma >= 0.0):
            raise ContractViolation(f"gamma must be >= 0, got {self.gamma}")
        self.unary_feature_weights = w
        self.gamma = float(self.gamma)

    def to_json_dict(self) -> dict:
        return {
            "unary_feature_weights": {
                name: float(v) for name, v in zip(FEATURE_NAMES, self.unary_feature_weights)
            },
            "gamma": self.gamma,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "EnergyWeights":
        named = d["unary_feature_weights"]
        missing = set(FEATURE_NAMES) - set(named)
        if missing:
            raise ContractViolation(f"weights file missing unary features: {sorted(missing)}")
        w = np.array([named[name] for name in FEATURE_NAMES], dtype=np.float64)
        return cls(unary_feature_weights=w, gamma=float(d["gamma"]))

    @classmethod
    def reference(cls, gamma: float = 3.0) -> "EnergyWeights":
        w = np.array([REFERENCE_UNARY_WEIGHTS[n] for n in FEATURE_NAMES])
        return cls(unary_feature_weights=w, gamma=gamma)


@dataclass(frozen=True)
class UnaryTable:
    """(N, K) per-actor per-sample energies, plus the feature tensor behind them."""

    energies: np.ndarray
    features: np.ndarray = None  # (N, K, NUM_FEATURES), kept for learning

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=np.float64)
        if e.ndim != 2:
            raise ContractViolation(f"unary table must be (N, K), got shape {e.shape}")
        if not np.all(np.isfinite(e)):
            raise ContractViolation("non-finite unary energy")
        object.__setattr__(self, "energies", e)

    @property
    def num_actors(self) -> int:
        return self.energies.shape[0]

    @property
    def num_samples(self) -> int:
        return self.energies.shape[1]


@dataclass(frozen=True)
class CollisionEdges:
    """Sparse pairwise collision structure.

    pairs[e] = (i, j) with i < j; matrices[e][k, l] is True when sample k
    of actor i collides with sample l of actor j. Actor pairs that a
    bounding-disc reachability test proves non-interacting are omitted.
    """

    num_actors: int
    pairs: tuple
    matrices: tuple

    def matrix(self, i: int, j: int) -> np.ndarray:
        """Collision matrix for the ordered pair (i, j); transposed view for j < i."""
        if i == j:
            raise ContractViolation("no self edges")
        key = (i, j) if i < j else (j, i)
        for (a, b), m in zip(self.pairs, self.matrices):
            if (a, b) == key:
                return m if i < j else m.T
        return None

    def neighbors(self, i: int) -> tuple:
        return tuple(sorted({b for a, b in self.pairs if a == i} | {a for a, b in self.pairs if b == i}))

    @property
    def num_edges(self) -> int:
        return len(self.pairs)


def _lane_for_actor(scene, actor_index):
    state = scene.actors[actor_index].state
    idx = nearest_lane(scene.lanes, (state.x, state.y))
    lane = scene.lanes[idx]
    off = lane.distance((state.x, state.y)) > OFF_LANE_FACTOR * lane.width
    return lane, off


def compute_feature_matrix(scene, actor_index, tset: TrajectorySet):
    """Vectorized features for every sample of one actor: (K, NUM_FEATURES).

    Returns (matrix, off_lane). Lane-relative features are measured
    against the lane nearest the actor's initial position; off_lane just
    flags that this nearest lane is far away.
    """
    state = scene.actors[actor_index].state
    lane, off = _lane_for_actor(scene, actor_index)
    wp = tset.waypoints
    K, T, _ = wp.shape
    pts = wp[:, :, (COL_X, COL_Y)].reshape(K * T, 2)
    s, lat, tangent = lane.project(pts)
    s = s.reshape(K, T)
    lat_mean = np.abs(lat).reshape(K, T).mean(axis=1)
    mis = np.abs(wrap_angle(wp[:, :, COL_H].reshape(K * T) - tangent)).reshape(K, T).mean(axis=1)

    horizon = wp[0, -1, 3] - wp[0, 0, 3]
    cv_end = np.array(
        [state.x + state.speed * horizon * np.cos(state.heading),
         state.y + state.speed * horizon * np.sin(state.heading)]
    )
    cv_dev = np.hypot(wp[:, -1, COL_X] - cv_end[0], wp[:, -1, COL_Y] - cv_end[1])

    dx = np.diff(wp[:, :, COL_X], axis=1)
    dy = np.diff(wp[:, :, COL_Y], axis=1)
    chord = np.hypot(dx, dy)  # (K, T-1)
    dh = wrap_angle(np.diff(wp[:, :, COL_H], axis=1))
    moving = chord > 1e-9
    # chord-based curvature: exact 1/R on circular arcs
    kappa = np.where(moving, 2.0 * np.abs(np.sin(dh / 2.0)) / np.where(moving, chord, 1.0), 0.0)
    n_moving = moving.sum(axis=1)
    mean_kappa = np.where(n_moving > 0, kappa.sum(axis=1) / np.maximum(n_moving, 1), 0.0)

    dt = np.diff(wp[0, :, 3])
    speeds = chord / dt[None, :]  # (K, T-1) mid-interval speeds
    if T >= 3:
        acc = np.diff(speeds, axis=1) / (0.5 * (dt[:-1] + dt[1:]))[None, :]
        mean_acc = np.abs(acc).mean(axis=1)
    else:
        mean_acc = np.zeros(K)

    progress = s[:, -1] - s[:, 0]

    out = np.stack([lat_mean, mis, cv_dev, mean_kappa, mean_acc, progress], axis=1)
    if not np.all(np.isfinite(out)):
        raise ContractViolation("non-finite feature value")
    return out, off


def compute_features(scene, actor_index, traj) -> FeatureVector:
    """Feature vector for one trajectory of one actor."""
    tset = TrajectorySet(traj.waypoints[None, :, :], [traj.mode])
    mat, off = compute_feature_matrix(scene, actor_index, tset)
    return FeatureVector(mat[0], off_lane=off)


def build_unary_table(scene, trajectory_sets, weights: EnergyWeights) -> UnaryTable:
    """(N, K) energies: dot(unary weights, features) per actor and sample."""
    n = len(scene.actors)
    if len(trajectory_sets) != n:
        raise ContractViolation(f"need one trajectory set per actor ({n}), got {len(trajectory_sets)}")
    feats = np.stack(
        [compute_feature_matrix(scene, i, trajectory_sets[i])[0] for i in range(n)]
    )
    energies = feats @ weights.unary_feature_weights
    return UnaryTable(energies, features=feats)


def _reach(tset: TrajectorySet) -> float:
    """Max displacement of any sample waypoint from the start position."""
    wp = tset.waypoints
    d = np.hypot(wp[:, :, COL_X] - wp[:, :1, COL_X], wp[:, :, COL_Y] - wp[:, :1, COL_Y])
    return float(d.max())


def build_collision_edges(trajectory_sets, footprints, interaction_radius: float = 0.0) -> CollisionEdges:
    """Pairwise collision matrices for every actor pair that could interact.

    A pair is omitted when the initial separation exceeds
    interaction_radius plus both actors' maximum reachable displacement
    plus both footprint circumradii: omitted pairs provably never collide
    (interpolated poses lie within the waypoint reach by convexity).
    """
    n = len(trajectory_sets)
    if len(footprints) != n:
        raise ContractViolation("one footprint per trajectory set required")
    reach = [_reach(ts) for ts in trajectory_sets]
    circ = [fp.circumradius for fp in footprints]
    starts = np.array([ts.waypoints[0, 0, (COL_X, COL_Y)] for ts in trajectory_sets])
    pairs = []
    matrices = []
    for i in range(n):
        for j in range(i + 1, n):
            sep = float(np.hypot(*(starts[i] - starts[j])))
            if sep > interaction_radius + reach[i] + reach[j] + circ[i] + circ[j]:
                continue
            hit = geometry.cross_first_hit(
                trajectory_sets[i], footprints[i], trajectory_sets[j], footprints[j]
            )
            if not (hit >= 0).any():
                continue  # no colliding combos: the pair cannot interact
            pairs.append((i, j))
            matrices.append(hit >= 0)
    return CollisionEdges(num_actors=n, pairs=tuple(pairs), matrices=tuple(matrices))


def joint_energy(config, unary: UnaryTable, edges: CollisionEdges, gamma: float) -> float:
    """Energy of one joint configuration (one sample index per actor).

    Pairwise terms follow the ordered-pair convention: each colliding
    unordered pair contributes 2 * gamma.
    """
    config = np.asarray(config, dtype=np.int64)
    n, k = unary.energies.shape
    if config.shape != (n,):
        raise ContractViolation(f"need one sample index per actor ({n}), got shape {config.shape}")
    if np.any(config < 0) or np.any(config >= k):
        raise ContractViolation("sample index out of range")
    total = float(unary.energies[np.arange(n), config].sum())
    for (i, j), mat in zip(edges.pairs, edges.matrices):
        if mat[config[i], config[j]]:
            total += 2.0 * gamma
    return total
