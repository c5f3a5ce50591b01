"""Lane geometry: projection, distance, boundaries, routes."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from interplan.errors import ConfigError
from interplan.lanes import LaneGeometry, Route, nearest_lane
from util import straight_lane


def l_lane(width=4.0):
    return LaneGeometry("L", np.array([[0.0, 0.0], [10.0, 0.0], [10.0, 10.0]]), width)


class TestProjection:
    def test_straight_lane_hand_values(self):
        lane = LaneGeometry("a", np.array([[0.0, 0.0], [100.0, 0.0]]), 4.0)
        s, lat, tangent = lane.project(np.array([[10.0, 3.0], [-5.0, 1.0], [120.0, 0.5]]))
        assert np.allclose(s, [10.0, 0.0, 100.0])  # s clamps at both ends
        assert np.allclose(lat, [3.0, 1.0, 0.5])  # left of travel is positive
        assert np.allclose(tangent, 0.0)

    def test_corner_hand_values(self):
        s, lat, tangent = l_lane().project(np.array([[12.0, 5.0], [3.0, -1.0]]))
        assert np.allclose(s, [15.0, 3.0])
        assert np.allclose(lat, [-2.0, -1.0])
        assert np.allclose(tangent, [np.pi / 2, 0.0])

    def test_distance(self):
        lane = LaneGeometry("a", np.array([[0.0, 0.0], [100.0, 0.0]]), 4.0)
        assert lane.distance((12.0, 5.0)) == pytest.approx(5.0)
        assert lane.distance((110.0, 0.0)) == pytest.approx(10.0)  # past the end
        assert l_lane().distance((13.0, -4.0)) == pytest.approx(5.0)

    def test_length(self):
        assert l_lane().length == pytest.approx(20.0)

    @given(st.floats(-20.0, 120.0), st.floats(-10.0, 10.0))
    def test_interior_roundtrip(self, x, y):
        """Off-axis distance equals |lateral| while the foot is interior."""
        lane = LaneGeometry("a", np.array([[0.0, 0.0], [100.0, 0.0]]), 4.0)
        s, lat, _ = lane.project(np.array([[x, y]]))
        if 0.0 < x < 100.0:
            assert abs(lat[0]) == pytest.approx(abs(y), abs=1e-12)
            assert lane.distance((x, y)) == pytest.approx(np.hypot(0.0, y), abs=1e-9)
        assert 0.0 <= s[0] <= 100.0


class TestBoundary:
    def test_straight_lane_offsets(self):
        lane = LaneGeometry("a", np.array([[0.0, 0.0], [100.0, 0.0]]), 4.0)
        assert np.allclose(lane.boundary(1), [[0.0, 2.0], [100.0, 2.0]])
        assert np.allclose(lane.boundary(-1), [[0.0, -2.0], [100.0, -2.0]])

    def test_corner_uses_averaged_normal(self):
        # corner vertex sits half a width along the bisector of the two normals
        left = l_lane().boundary(1)
        r2 = np.sqrt(2.0)
        assert np.allclose(left, [[0.0, 2.0], [10.0 - r2, r2], [8.0, 10.0]])
        right = l_lane().boundary(-1)
        assert np.allclose(right, [[0.0, -2.0], [10.0 + r2, -r2], [12.0, 10.0]])

    def test_segments_cover_both_sides(self):
        segs = l_lane().boundary_segments()
        assert segs.shape == (4, 4)
        starts = set(map(tuple, np.round(segs[:, :2], 9)))
        assert (0.0, 2.0) in starts and (0.0, -2.0) in starts


class TestValidation:
    def test_bad_centerlines(self):
        with pytest.raises(ConfigError):
            LaneGeometry("a", np.array([[0.0, 0.0]]), 4.0)
        with pytest.raises(ConfigError):
            LaneGeometry("a", np.array([[0.0, 0.0], [0.0, 0.0]]), 4.0)
        with pytest.raises(ConfigError):
            LaneGeometry("a", np.array([[0.0, 0.0], [1.0, 0.0]]), 0.0)


class TestNearestLane:
    def test_picks_closer_centerline(self):
        lanes = [straight_lane("low", 0.0), straight_lane("high", 4.0)]
        assert nearest_lane(lanes, (5.0, 2.9)) == 1
        assert nearest_lane(lanes, (5.0, 1.1)) == 0


class TestRoute:
    def test_joint_vertex_deduplicated(self):
        route = Route(
            [
                LaneGeometry("a", np.array([[0.0, 0.0], [50.0, 0.0]]), 4.0),
                LaneGeometry("b", np.array([[50.0, 0.0], [100.0, 0.0]]), 4.0),
            ]
        )
        assert route.reference.centerline.shape == (3, 2)
        assert route.reference.length == pytest.approx(100.0)
        s, lat, _ = route.project(np.array([[60.0, 1.0]]))
        assert s[0] == pytest.approx(60.0)
        assert lat[0] == pytest.approx(1.0)

    def test_heading_misalignment(self):
        route = Route([LaneGeometry("a", np.array([[0.0, 0.0], [100.0, 0.0]]), 4.0)])
        pts = np.array([[10.0, 0.0], [20.0, 1.0], [30.0, 0.0]])
        mis = route.heading_misalignment(pts, np.array([0.0, -0.3, np.pi]))
        assert np.allclose(mis, [0.0, 0.3, np.pi])
