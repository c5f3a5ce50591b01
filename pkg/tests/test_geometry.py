"""Collision predicates against hand cases and an independent polygon library."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from shapely.geometry import Polygon

from interplan.errors import ContractViolation
from interplan.geometry import (
    cross_first_hit,
    lane_violation,
    lane_violation_first_hit,
    oriented_box_overlap,
    trajectories_collide,
    trajectory_first_hit,
)
from interplan.kernels import interpolated_poses, step_to_time_index, trajectory_discs
from interplan.types import Footprint, KinematicState, OrientedBox, TimeGrid, TrajectorySet
from util import const_traj, external, straight_lane

FP = Footprint()  # 4.5 x 2


def shapely_box(box: OrientedBox) -> Polygon:
    return Polygon(box.corners)


class TestOrientedBoxOverlap:
    def test_hand_cases(self):
        a = OrientedBox(0.0, 0.0, 0.0, FP)
        assert oriented_box_overlap(a, OrientedBox(3.0, 0.0, 0.0, FP))
        assert not oriented_box_overlap(a, OrientedBox(10.0, 0.0, 0.0, FP))
        # overlap is closed: exact face contact counts
        assert oriented_box_overlap(a, OrientedBox(4.5, 0.0, 0.0, FP))
        assert not oriented_box_overlap(a, OrientedBox(4.5 + 1e-7, 0.0, 0.0, FP))

    def test_rotation_matters(self):
        a = OrientedBox(0.0, 0.0, 0.0, FP)
        # lateral gap 0.1 m; rotating the neighbour 90 degrees swings its
        # 2.25 m half-length into that gap
        b_parallel = OrientedBox(0.0, 2.1, 0.0, FP)
        b_crossed = OrientedBox(0.0, 2.1, np.pi / 2, FP)
        assert not oriented_box_overlap(a, b_parallel)
        assert oriented_box_overlap(a, b_crossed)

    def test_agrees_with_shapely(self, rng):
        """400 random pairs, skipping only razor-edge tangencies."""
        checked = 0
        for _ in range(400):
            a = OrientedBox(*rng.uniform(-3, 3, 2), rng.uniform(-np.pi, np.pi), Footprint(*rng.uniform(0.5, 5.0, 2)))
            b = OrientedBox(*rng.uniform(-3, 3, 2), rng.uniform(-np.pi, np.pi), Footprint(*rng.uniform(0.5, 5.0, 2)))
            pa, pb = shapely_box(a), shapely_box(b)
            dist = pa.distance(pb)
            area = pa.intersection(pb).area
            if dist > 1e-9:
                assert not oriented_box_overlap(a, b)
                checked += 1
            elif area > 1e-12:
                assert oriented_box_overlap(a, b)
                checked += 1
        assert checked > 350  # nearly every random pair is decisive

    @given(st.data())
    def test_symmetric(self, data):
        def box(tag):
            return OrientedBox(
                data.draw(st.floats(-5, 5), label=f"{tag}x"),
                data.draw(st.floats(-5, 5), label=f"{tag}y"),
                data.draw(st.floats(-np.pi, np.pi), label=f"{tag}h"),
                Footprint(
                    data.draw(st.floats(0.3, 6.0), label=f"{tag}l"),
                    data.draw(st.floats(0.3, 3.0), label=f"{tag}w"),
                ),
            )

        a, b = box("a"), box("b")
        assert oriented_box_overlap(a, b) == oriented_box_overlap(b, a)


class TestCrossFirstHit:
    def test_overtake_hand_case(self, grid):
        """Closing on a stopped car: gap 15 m at 10 m/s, contact at 4.5 m gap.

        Waypoint t=1.0 leaves a 5 m gap (clear); the 1.25 s chord midpoint
        leaves 2.5 m (overlap), so the first hit is interpolated step 5.
        """
        a = const_traj(KinematicState(0.0, 0.0, 0.0, 10.0), grid)
        b = const_traj(KinematicState(15.0, 0.0, 0.0, 0.0), grid)
        hit = cross_first_hit(a.waypoints[None], FP, b.waypoints[None], FP)
        assert hit.shape == (1, 1)
        assert hit[0, 0] == 5
        assert step_to_time_index(5) == 3  # buckets with the t=1.5 waypoint
        assert trajectory_first_hit(a, FP, b, FP) == 5
        assert trajectories_collide(a, FP, b, FP)

    def test_never_colliding(self, grid):
        a = const_traj(KinematicState(0.0, 0.0, 0.0, 10.0), grid)
        b = const_traj(KinematicState(0.0, 30.0, 0.0, 10.0), grid)
        assert trajectory_first_hit(a, FP, b, FP) == -1
        assert not trajectories_collide(a, FP, b, FP)

    def test_matrix_against_per_pair_calls(self, grid, rng):
        """The batched matrix equals one-at-a-time trajectory checks."""
        mk = lambda: const_traj(
            KinematicState(rng.uniform(-10, 10), rng.uniform(-4, 4), rng.uniform(-0.4, 0.4), rng.uniform(0, 12)),
            grid,
        )
        sa = [mk() for _ in range(4)]
        sb = [mk() for _ in range(5)]
        got = cross_first_hit(TrajectorySet.from_trajectories(sa), FP, TrajectorySet.from_trajectories(sb), FP)
        for i, ta in enumerate(sa):
            for j, tb in enumerate(sb):
                assert got[i, j] == trajectory_first_hit(ta, FP, tb, FP)

    def test_grid_mismatch_rejected(self, grid):
        a = const_traj(KinematicState(0, 0, 0, 5), grid)
        b = const_traj(KinematicState(0, 0, 0, 5), TimeGrid(num_waypoints=5))
        with pytest.raises(ContractViolation):
            trajectory_first_hit(a, FP, b, FP)


class TestLaneViolation:
    def test_inside_stays_clean(self, grid):
        lane = straight_lane()
        tau = const_traj(KinematicState(0.0, 0.0, 0.0, 10.0), grid)
        assert not lane_violation(tau, FP, [lane])

    def test_exact_touch_counts(self, grid):
        # half-width 1 box centered at y=1 touches the y=2 boundary
        lane = straight_lane()
        tau = external(10 * grid.times, 1.0, 0.0, grid)
        assert lane_violation(tau, FP, [lane])

    def test_drift_first_hit_step(self, grid):
        """y = 0.4 t reaches the boundary (top edge at 2) at t = 2.5: step 10."""
        lane = straight_lane()
        drift = external(10 * grid.times, 0.4 * grid.times, 0.0, grid)
        assert lane_violation_first_hit(drift.waypoints, FP, [lane]) == 10

    def test_batched_matches_single(self, grid):
        lane = straight_lane()
        drift = external(10 * grid.times, 0.4 * grid.times, 0.0, grid)
        clean = const_traj(KinematicState(0.0, 0.0, 0.0, 10.0), grid)
        stack = np.stack([drift.waypoints, clean.waypoints])
        out = lane_violation_first_hit(stack, FP, [lane])
        assert out.tolist() == [10, -1]

    def test_empty_lane_set_rejected(self, grid):
        tau = const_traj(KinematicState(0, 0, 0, 5), grid)
        with pytest.raises(ContractViolation):
            lane_violation(tau, FP, [])


class TestInterpolation:
    def test_midpoint_pose(self, grid):
        wp = np.zeros((1, 2, 4))
        wp[0, 0] = [0.0, 0.0, 2.8, 0.0]
        wp[0, 1] = [4.0, 2.0, -3.0, 0.5]
        pos, cos, sin = interpolated_poses(wp)
        assert pos.shape == (1, 3, 2)
        assert np.allclose(pos[0, 1], [2.0, 1.0])
        # heading averages along the short way around the circle
        expect = 2.8 + 0.5 * (((-3.0 - 2.8 + np.pi) % (2 * np.pi)) - np.pi)
        assert np.hypot(cos[0, 1] - np.cos(expect), sin[0, 1] - np.sin(expect)) < 1e-12

    def test_discs_bound_all_poses(self, rng):
        pos = rng.normal(0.0, 5.0, size=(6, 13, 2))
        centers, radii = trajectory_discs(pos, FP.circumradius)
        d = np.linalg.norm(pos - centers[:, None, :], axis=2)
        assert (d <= radii[:, None] - FP.circumradius + 1e-9).all()

    def test_step_to_time_index_table(self):
        assert [step_to_time_index(s) for s in range(6)] == [0, 1, 1, 2, 2, 3]
