"""Hand-built fixtures shared across test modules.

Everything here is deliberately independent of the sampler and the
scenario builders: trajectories are assembled from closed-form waypoint
arrays so tests can state their expected values outright.
"""

import numpy as np

from interplan.lanes import LaneGeometry
from interplan.scenario import Actor, Scene
from interplan.types import MODE_EXTERNAL, Footprint, KinematicState, TimeGrid, Trajectory


def const_velocity_waypoints(state: KinematicState, grid: TimeGrid, accel: float = 0.0):
    """Closed-form straight motion along the heading; speed clamps at zero."""
    t = grid.times
    if accel < 0.0:
        t_eff = np.minimum(t, state.speed / -accel)
    else:
        t_eff = t
    d = state.speed * t_eff + 0.5 * accel * t_eff * t_eff
    wp = np.empty((len(t), 4))
    wp[:, 0] = state.x + d * np.cos(state.heading)
    wp[:, 1] = state.y + d * np.sin(state.heading)
    wp[:, 2] = state.heading
    wp[:, 3] = t
    return wp


def const_traj(state: KinematicState, grid: TimeGrid, accel: float = 0.0) -> Trajectory:
    return Trajectory(const_velocity_waypoints(state, grid, accel), MODE_EXTERNAL)


def external(xs, ys, headings, grid: TimeGrid) -> Trajectory:
    """Trajectory from explicit per-waypoint values (scalars broadcast)."""
    T = grid.num_waypoints
    wp = np.empty((T, 4))
    wp[:, 0] = xs
    wp[:, 1] = ys
    wp[:, 2] = headings
    wp[:, 3] = grid.times
    return Trajectory(wp, MODE_EXTERNAL)


def straight_lane(lane_id="main", y=0.0, x0=-60.0, x1=400.0, width=4.0) -> LaneGeometry:
    return LaneGeometry(lane_id, np.array([[x0, y], [x1, y]], dtype=np.float64), width)


def hand_scene(grid=None, actor_states=None, lane_ys=(0.0,), ego=None, lane_x1=400.0):
    """Ego plus actors on straight lanes, everyone scripted to hold speed."""
    grid = grid or TimeGrid()
    lanes = [straight_lane(f"lane{i}", y, x1=lane_x1) for i, y in enumerate(lane_ys)]
    ego = ego or KinematicState(0.0, 0.0, 0.0, 10.0)
    if actor_states is None:
        actor_states = [KinematicState(40.0, 0.0, 0.0, 8.0)]
    fp = Footprint()
    actors = [Actor(state=s, footprint=fp, gt_future=const_traj(s, grid)) for s in actor_states]
    return Scene(
        scene_id="hand-0",
        seed=0,
        template="lane_follow",
        grid=grid,
        lanes=lanes,
        route=[lanes[0].lane_id],
        ego_state=ego,
        ego_footprint=fp,
        expert=const_traj(ego, grid),
        actors=actors,
    )
