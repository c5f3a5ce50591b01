"""Synthetic scene generation, validation and serialization.

A scene bundles lane geometry, background actors with scripted
ground-truth futures, the ego vehicle with its route, and the expert
trajectory the planner is trained to imitate. Template policies share
the sampler's dynamic primitives (piecewise constant-curvature,
constant-acceleration rollouts), and every scripted conflict is
verified collision-free with the geometry predicates before a scene is
accepted.

Templates are tuned so interaction matters: crossing and merging actors
are on constant-speed collision courses that their scripted futures
resolve by yielding. Extrapolating everyone at constant speed predicts
a crash; the ground truth contains none.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry, serialize
from .errors import ConfigError, ContractViolation, GenerationError, SceneFormatError
from .lanes import LaneGeometry
from .sampler import rollout_piecewise
from .types import Footprint, KinematicState, OrientedBox, TimeGrid, Trajectory, wrap_angle

SCENE_FORMAT = "interplan-scenes"
SCENE_VERSION = 1

TEMPLATE_KINDS = (
    "lane_follow",
    "intersection_cross",
    "cut_in",
    "merge",
    "stationary_blocker",
)
_MIN_ACTORS = {
    "lane_follow": 1,
    "intersection_cross": 2,
    "cut_in": 2,
    "merge": 2,
    "stationary_blocker": 1,
}

LANE_WIDTH = 4.0


@dataclass(frozen=True)
class Actor:
    """One background vehicle: current state, extent, scripted future."""

    state: KinematicState
    footprint: Footprint
    gt_future: Trajectory


@dataclass
class Scene:
    scene_id: str
    seed: int
    template: str
    grid: TimeGrid
    lanes: list
    route: list
    ego_state: KinematicState
    ego_footprint: Footprint
    expert: Trajectory
    actors: list

    def route_lanes(self) -> list:
        by_id = {lane.lane_id: lane for lane in self.lanes}
        try:
            return [by_id[lid] for lid in self.route]
        except KeyError as exc:
            raise ContractViolation(f"route references unknown lane {exc.args[0]!r}") from exc

    @property
    def num_actors(self) -> int:
        return len(self.actors)

    def validate(self):
        self.route_lanes()
        t_ref = self.grid.times
        for label, traj in [("expert", self.expert)] + [
            (f"actor {i} gt", a.gt_future) for i, a in enumerate(self.actors)
        ]:
            if len(traj) != self.grid.num_waypoints or not np.allclose(
                traj.times, t_ref, rtol=0.0, atol=1e-9
            ):
                raise ContractViolation(f"{label} is not on the scene time grid")
        e0 = self.expert.waypoints[0]
        if (
            abs(e0[0] - self.ego_state.x) > 1e-9
            or abs(e0[1] - self.ego_state.y) > 1e-9
            or abs(wrap_angle(e0[2] - self.ego_state.heading)) > 1e-9
        ):
            raise ContractViolation("expert trajectory does not start at the ego state")
        for i, a in enumerate(self.actors):
            w0 = a.gt_future.waypoints[0]
            if abs(w0[0] - a.state.x) > 1e-9 or abs(w0[1] - a.state.y) > 1e-9:
                raise ContractViolation(f"actor {i} gt future does not start at its state")
        ego_box = OrientedBox(self.ego_state.x, self.ego_state.y, self.ego_state.heading, self.ego_footprint)
        for i, a in enumerate(self.actors):
            box = OrientedBox(a.state.x, a.state.y, a.state.heading, a.footprint)
            if geometry.oriented_box_overlap(ego_box, box):
                raise ContractViolation(f"ego initially collides with actor {i}")


@dataclass(frozen=True)
class ScenarioTemplate:
    """Scene family plus its parameter ranges."""

    kind: str
    num_actors: tuple = (1, 4)
    speed_range: tuple = (5.0, 12.0)
    accel_noise: float = 0.5
    lateral_jitter: float = 0.0

    def validate(self):
        if self.kind not in TEMPLATE_KINDS:
            raise ConfigError(f"unknown template kind {self.kind!r}; choose from {TEMPLATE_KINDS}")
        lo, hi = self.num_actors
        if not (isinstance(lo, (int, np.integer)) and isinstance(hi, (int, np.integer))):
            raise ConfigError("num_actors bounds must be integers")
        if lo > hi or lo < _MIN_ACTORS[self.kind]:
            raise ConfigError(
                f"{self.kind} needs num_actors range within [{_MIN_ACTORS[self.kind]}, inf), "
                f"lo <= hi; got {self.num_actors}"
            )
        slo, shi = self.speed_range
        if slo > shi or slo < 0.0:
            raise ConfigError(f"invalid speed_range {self.speed_range}")
        if not 0.0 <= self.accel_noise <= 1.5:
            raise ConfigError("accel_noise must be in [0, 1.5]")
        if not 0.0 <= self.lateral_jitter <= 0.8:
            raise ConfigError("lateral_jitter must be in [0, 0.8]")


class _Retry(Exception):
    """Internal: scripted draw violated a safety constraint, redraw."""


def _const_rollout(state: KinematicState, grid: TimeGrid, accel: float = 0.0) -> Trajectory:
    return rollout_piecewise(state, grid, [(grid.horizon_s, 0.0, accel)])


def _require_safe(traj_a, fp_a, traj_b, fp_b):
    if geometry.trajectories_collide(traj_a, fp_a, traj_b, fp_b):
        raise _Retry


def _straight_lane(lane_id: str, y: float, x0: float = -60.0, x1: float = 400.0) -> LaneGeometry:
    return LaneGeometry(lane_id, np.array([[x0, y], [x1, y]]), LANE_WIDTH)


def _build_lane_follow(rng, tmpl: ScenarioTemplate, grid: TimeGrid, scene_id, seed) -> Scene:
    """Parallel lanes, everyone drives on.

    Vehicles sit on one staggered longitudinal ladder: consecutive rungs
    never share a lane, so in-lane headways are at least two rungs
    (>= 44 m, beyond any sample pair's closing reach) and nobody starts
    side by side. Lane speeds stay within a narrow band of a scene-wide
    base so cross-lane sample couplings remain weak.
    """
    n_actor = int(rng.integers(tmpl.num_actors[0], tmpl.num_actors[1] + 1))
    n_lanes = int(rng.integers(2, 5))
    lanes = [_straight_lane(f"lane{i}", i * LANE_WIDTH, x1=1600.0) for i in range(n_lanes)]
    ego_slot = int(rng.integers(0, n_actor + 1))
    v_base = rng.uniform(*tmpl.speed_range)
    lane_speed = np.clip(v_base + rng.uniform(-1.5, 1.5, size=n_lanes), 0.5, None)
    fp = Footprint()
    actors = []
    ego_state = None
    expert = None
    route = None
    x = rng.uniform(-40.0, 0.0)
    prev_lane = -1
    for slot in range(n_actor + 1):
        if prev_lane < 0:
            li = int(rng.integers(0, n_lanes))
        else:
            li = int(rng.integers(0, n_lanes - 1))
            if li >= prev_lane:
                li += 1  # uniform over lanes other than the previous rung's
        prev_lane = li
        speed = float(np.clip(lane_speed[li] + rng.uniform(-0.8, 0.8), 0.5, None))
        y = li * LANE_WIDTH + rng.uniform(-tmpl.lateral_jitter, tmpl.lateral_jitter)
        state = KinematicState(x, y, 0.0, speed)
        if slot == ego_slot:
            ego_state = state
            expert = _const_rollout(state, grid)
            route = [f"lane{li}"]
        else:
            accel = rng.uniform(-tmpl.accel_noise, tmpl.accel_noise)
            actors.append(Actor(state, fp, _const_rollout(state, grid, accel)))
        x += rng.uniform(22.0, 30.0)
    return Scene(scene_id, seed, tmpl.kind, grid, lanes, route, ego_state, fp, expert, actors)


def _build_intersection_cross(rng, tmpl, grid, scene_id, seed) -> Scene:
    """Crossing traffic: A has priority, B stops short of A's lane, ego trails B.

    Constant-speed extrapolations of A and B meet at the crossing inside
    the horizon; B's scripted future brakes to a stop 5.5 m before it.
    The ego follows B, so a planner that extrapolates B at constant speed
    drives into the back of the stopped car.
    """
    lanes = [
        LaneGeometry("lane_x", np.array([[-90.0, 0.0], [90.0, 0.0]]), LANE_WIDTH),
        LaneGeometry("lane_y", np.array([[0.0, -90.0], [0.0, 90.0]]), LANE_WIDTH),
    ]
    fp = Footprint()
    slo, shi = tmpl.speed_range
    v_a = rng.uniform(slo, shi)
    t_a = rng.uniform(2.3, 2.9)  # crossing time at constant speed
    a_state = KinematicState(-v_a * t_a, 0.0, 0.0, v_a)
    a_gt = _const_rollout(a_state, grid)

    v_b = rng.uniform(slo, shi)
    t_b = t_a + rng.uniform(-0.25, 0.25)
    d_stop = v_b * t_b - 5.5  # stop clear of A's swept corridor
    a_b = v_b**2 / (2.0 * d_stop) if d_stop > 0.0 else np.inf
    if a_b > 3.8:
        raise _Retry
    b_state = KinematicState(0.0, -v_b * t_b, np.pi / 2.0, v_b)
    b_gt = rollout_piecewise(b_state, grid, [(3.0, 0.0, -a_b)])
    _require_safe(a_gt, fp, b_gt, fp)

    # ego follows B; when B stops for the crossing the ego must stop too
    v_e = max(0.5, v_b + rng.uniform(-0.5, 0.5))
    gap0 = rng.uniform(12.0, 18.0)
    d_stop = v_b * t_b - 5.5
    a_e = v_e**2 / (2.0 * (d_stop + gap0 - 6.5))  # rest 6.5 m behind stopped B
    if a_e > 3.8:
        raise _Retry
    ego_state = KinematicState(0.0, b_state.y - gap0, np.pi / 2.0, v_e)
    expert = rollout_piecewise(ego_state, grid, [(3.0, 0.0, -a_e)])
    _require_safe(expert, fp, a_gt, fp)
    _require_safe(expert, fp, b_gt, fp)

    actors = [Actor(a_state, fp, a_gt), Actor(b_state, fp, b_gt)]
    n_actor = int(rng.integers(tmpl.num_actors[0], tmpl.num_actors[1] + 1))
    v_base = rng.uniform(slo, shi)  # shared platoon speed keeps gaps stable
    y = 15.0
    for i in range(max(0, n_actor - 2)):
        st = KinematicState(
            0.0, y, np.pi / 2.0, float(np.clip(v_base + rng.uniform(-0.8, 0.8), 0.5, None))
        )
        actors.append(Actor(st, fp, _const_rollout(st, grid)))
        y += rng.uniform(45.0, 55.0)
    return Scene(scene_id, seed, tmpl.kind, grid, lanes, ["lane_y"], ego_state, fp, expert, actors)


def _build_cut_in(rng, tmpl, grid, scene_id, seed) -> Scene:
    """F cuts from the adjacent lane into the gap ahead of fast-closing R."""
    lanes = [_straight_lane("lane0", 0.0), _straight_lane("lane1", LANE_WIDTH)]
    fp = Footprint()
    slo, shi = tmpl.speed_range
    v_f = rng.uniform(max(slo, 5.0), shi)
    theta = min(0.32, 1.9 / (1.5 * v_f))
    f_state = KinematicState(rng.uniform(15.0, 30.0), 2.6, -theta, v_f)
    a_f = rng.uniform(0.2, 0.8)
    kappa = theta / (v_f + 0.5 * a_f)  # straighten out over ~1 s
    f_gt = rollout_piecewise(
        f_state, grid, [(1.0, 0.0, a_f), (1.0, kappa, a_f), (1.0, 0.0, a_f)]
    )

    v_r = v_f + rng.uniform(3.5, 5.5)
    r_state = KinematicState(f_state.x - rng.uniform(10.0, 15.0), 0.0, 0.0, v_r)
    # sustained moderate braking keeps R inside the sampler's plausible range
    a_br = -np.clip((v_r - v_f) / 2.2 + 0.4, 0.8, 2.6)
    r_gt = rollout_piecewise(r_state, grid, [(3.0, 0.0, a_br)])
    _require_safe(f_gt, fp, r_gt, fp)

    v_e = max(0.5, v_r + rng.uniform(-0.5, 0.5))
    ego_state = KinematicState(r_state.x - rng.uniform(11.0, 16.0), 0.0, 0.0, v_e)
    a_e = a_br - rng.uniform(0.5, 0.9)  # brake harder than R so the gap reopens
    expert = rollout_piecewise(ego_state, grid, [(3.0, 0.0, a_e)])
    _require_safe(expert, fp, r_gt, fp)
    _require_safe(expert, fp, f_gt, fp)

    actors = [Actor(f_state, fp, f_gt), Actor(r_state, fp, r_gt)]
    n_actor = int(rng.integers(tmpl.num_actors[0], tmpl.num_actors[1] + 1))
    v_base = rng.uniform(slo, shi)
    x = f_state.x + 50.0
    for i in range(max(0, n_actor - 2)):
        st = KinematicState(
            x, LANE_WIDTH, 0.0, float(np.clip(v_base + rng.uniform(-0.8, 0.8), 0.5, None))
        )
        actors.append(Actor(st, fp, _const_rollout(st, grid)))
        x += rng.uniform(45.0, 55.0)
    return Scene(scene_id, seed, tmpl.kind, grid, lanes, ["lane0"], ego_state, fp, expert, actors)


def _build_merge(rng, tmpl, grid, scene_id, seed) -> Scene:
    """M merges from an on-ramp into the gap ahead of fast-closing C."""
    merge_x = 40.0
    ramp_len = 70.0
    theta = np.arctan2(9.0, np.sqrt(ramp_len**2 - 9.0**2))
    ramp_start = np.array([merge_x - ramp_len * np.cos(theta), -ramp_len * np.sin(theta)])
    lanes = [
        _straight_lane("lane0", 0.0),
        LaneGeometry("ramp", np.array([ramp_start, [merge_x, 0.0], [160.0, 0.0]]), LANE_WIDTH),
    ]
    fp = Footprint()
    slo, shi = tmpl.speed_range
    v_m = rng.uniform(max(slo, 5.0), shi)
    t_m = rng.uniform(1.8, 2.6)  # merge-point arrival at constant speed
    d_m = v_m * t_m
    m_state = KinematicState(
        merge_x - d_m * np.cos(theta), -d_m * np.sin(theta), theta, v_m
    )
    a_m = rng.uniform(0.2, 0.8)
    t_straight = np.clip(round((t_m - 0.5) / 0.5) * 0.5, 0.5, 2.5)
    segs = [(t_straight, 0.0, a_m), (0.5, -theta / (0.5 * v_m), a_m)]
    remain = grid.horizon_s - t_straight - 0.5
    if remain > 0.0:
        segs.append((remain, 0.0, a_m))
    m_gt = rollout_piecewise(m_state, grid, segs)

    v_c = v_m + rng.uniform(3.5, 5.5)
    t_c = t_m + rng.uniform(0.1, 0.35)  # C reaches the merge just after M
    c_state = KinematicState(merge_x - v_c * t_c, 0.0, 0.0, v_c)
    if c_state.x > m_state.x - 10.0:  # keep C clearly behind the merging car
        raise _Retry
    # sustained moderate braking keeps C inside the sampler's plausible range
    a_br = -np.clip((v_c - v_m) / 2.2 + 0.4, 0.8, 2.6)
    c_gt = rollout_piecewise(c_state, grid, [(3.0, 0.0, a_br)])
    _require_safe(m_gt, fp, c_gt, fp)

    v_e = max(0.5, v_c + rng.uniform(-0.5, 0.5))
    ego_state = KinematicState(c_state.x - rng.uniform(11.0, 16.0), 0.0, 0.0, v_e)
    expert = rollout_piecewise(ego_state, grid, [(3.0, 0.0, a_br - rng.uniform(0.5, 0.9))])
    _require_safe(expert, fp, c_gt, fp)
    _require_safe(expert, fp, m_gt, fp)

    actors = [Actor(m_state, fp, m_gt), Actor(c_state, fp, c_gt)]
    n_actor = int(rng.integers(tmpl.num_actors[0], tmpl.num_actors[1] + 1))
    v_base = rng.uniform(slo, shi)
    x = merge_x + 45.0
    for i in range(max(0, n_actor - 2)):
        st = KinematicState(
            x, 0.0, 0.0, float(np.clip(v_base + rng.uniform(-0.8, 0.8), 0.5, None))
        )
        actors.append(Actor(st, fp, _const_rollout(st, grid)))
        x += rng.uniform(45.0, 55.0)
    return Scene(scene_id, seed, tmpl.kind, grid, lanes, ["lane0"], ego_state, fp, expert, actors)


def _build_stationary_blocker(rng, tmpl, grid, scene_id, seed) -> Scene:
    """A stopped vehicle in the ego lane; the expert brakes to a stop behind it."""
    lanes = [_straight_lane("lane0", 0.0), _straight_lane("lane1", LANE_WIDTH)]
    fp = Footprint()
    slo, shi = tmpl.speed_range
    x_s = rng.uniform(28.0, 45.0)
    s_state = KinematicState(x_s, 0.0, 0.0, 0.0)
    s_gt = _const_rollout(s_state, grid)

    v_cap = np.sqrt(7.0 * (x_s - 7.0))  # keep the required stop under 3.5 m/s^2
    v_e = rng.uniform(slo, min(shi, v_cap))
    ego_state = KinematicState(0.0, 0.0, 0.0, v_e)
    a_e = -v_e**2 / (2.0 * (x_s - 7.0))
    expert = rollout_piecewise(ego_state, grid, [(3.0, 0.0, a_e)])
    _require_safe(expert, fp, s_gt, fp)

    actors = [Actor(s_state, fp, s_gt)]
    n_actor = int(rng.integers(tmpl.num_actors[0], tmpl.num_actors[1] + 1))
    x = rng.uniform(-30.0, -10.0)
    v_base = rng.uniform(slo, shi)
    for _ in range(max(0, n_actor - 1)):
        speed = float(np.clip(v_base + rng.uniform(-0.8, 0.8), 0.5, None))
        st = KinematicState(x, LANE_WIDTH, 0.0, speed)
        actors.append(Actor(st, fp, _const_rollout(st, grid)))
        x += rng.uniform(45.0, 55.0)
    return Scene(scene_id, seed, tmpl.kind, grid, lanes, ["lane0"], ego_state, fp, expert, actors)


_BUILDERS = {
    "lane_follow": _build_lane_follow,
    "intersection_cross": _build_intersection_cross,
    "cut_in": _build_cut_in,
    "merge": _build_merge,
    "stationary_blocker": _build_stationary_blocker,
}

_MAX_ATTEMPTS = 60


def generate(template: ScenarioTemplate, count: int, seed: int, grid: TimeGrid = None) -> list:
    """Deterministically generate `count` validated scenes from a template."""
    template.validate()
    if count < 1:
        raise ConfigError("count must be >= 1")
    grid = grid or TimeGrid()
    builder = _BUILDERS[template.kind]
    children = np.random.SeedSequence(seed).spawn(count)
    scenes = []
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        scene_id = f"{template.kind}-{seed}-{i:05d}"
        for _ in range(_MAX_ATTEMPTS):
            try:
                scene = builder(rng, template, grid, scene_id, seed)
                scene.validate()
            except (_Retry, ContractViolation):
                continue
            break
        else:
            raise GenerationError(
                f"{template.kind}: no draw satisfied the scripted-safety constraints "
                f"in {_MAX_ATTEMPTS} attempts (scene {i}, seed {seed})"
            )
        scenes.append(scene)
    return scenes


def _state_dict(s: KinematicState) -> dict:
    return {"x": s.x, "y": s.y, "heading": s.heading, "speed": s.speed}


def _traj_dict(t: Trajectory) -> dict:
    return {"mode": t.mode, "waypoints": [[float(v) for v in row] for row in t.waypoints]}


def scene_to_dict(scene: Scene) -> dict:
    return {
        "id": scene.scene_id,
        "seed": scene.seed,
        "template": scene.template,
        "lanes": [
            {"id": l.lane_id, "width": l.width, "centerline": [[float(v) for v in p] for p in l.centerline]}
            for l in scene.lanes
        ],
        "route": list(scene.route),
        "ego": {
            "state": _state_dict(scene.ego_state),
            "footprint": {"length": scene.ego_footprint.length, "width": scene.ego_footprint.width},
        },
        "expert": _traj_dict(scene.expert),
        "actors": [
            {
                "state": _state_dict(a.state),
                "footprint": {"length": a.footprint.length, "width": a.footprint.width},
                "gt_future": _traj_dict(a.gt_future),
            }
            for a in scene.actors
        ],
    }


def scene_from_dict(d: dict, grid: TimeGrid) -> Scene:
    def state(sd):
        return KinematicState(sd["x"], sd["y"], sd["heading"], sd["speed"])

    def foot(fd):
        return Footprint(fd["length"], fd["width"])

    def traj(td):
        return Trajectory(np.array(td["waypoints"], dtype=np.float64), mode=td["mode"])

    lanes = [
        LaneGeometry(ld["id"], np.array(ld["centerline"], dtype=np.float64), ld["width"])
        for ld in d["lanes"]
    ]
    actors = [
        Actor(state(ad["state"]), foot(ad["footprint"]), traj(ad["gt_future"]))
        for ad in d["actors"]
    ]
    return Scene(
        scene_id=d["id"],
        seed=d["seed"],
        template=d["template"],
        grid=grid,
        lanes=lanes,
        route=list(d["route"]),
        ego_state=state(d["ego"]["state"]),
        ego_footprint=foot(d["ego"]["footprint"]),
        expert=traj(d["expert"]),
        actors=actors,
    )


def save(scenes, path):
    """Write a scene list as versioned JSON (atomic, canonical key order)."""
    scenes = list(scenes)
    grids = {s.grid for s in scenes}
    if len(grids) > 1:
        raise ContractViolation("all scenes in one file must share a time grid")
    grid = scenes[0].grid if scenes else TimeGrid()
    doc = {
        "format": SCENE_FORMAT,
        "version": SCENE_VERSION,
        "grid": {"horizon_s": grid.horizon_s, "num_waypoints": grid.num_waypoints},
        "scenes": [scene_to_dict(s) for s in scenes],
    }
    serialize.write_json(path, doc, pretty=False)


def load(path) -> list:
    """Load and validate a scene file; exact inverse of save."""
    doc = serialize.load_json(path)
    serialize.check_format(doc, path, SCENE_FORMAT, SCENE_VERSION)
    try:
        grid = TimeGrid(doc["grid"]["horizon_s"], doc["grid"]["num_waypoints"])
        scenes = [scene_from_dict(sd, grid) for sd in doc["scenes"]]
    except KeyError as exc:
        raise SceneFormatError(f"{path}: missing field {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        raise SceneFormatError(f"{path}: malformed scene data: {exc}") from exc
    for scene in scenes:
        scene.validate()
    return scenes
