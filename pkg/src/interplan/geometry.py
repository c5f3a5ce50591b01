"""Collision and lane-boundary predicates over oriented boxes.

Trajectory-level checks evaluate every shared waypoint plus the chord
midpoint between consecutive waypoints (positions averaged, headings
slerped). Overlap is closed: touching counts. The first-hit variants
return interpolated step indices so metrics can bucket events by time.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import ContractViolation
from .types import Footprint, OrientedBox, Trajectory, TrajectorySet


def oriented_box_overlap(a: OrientedBox, b: OrientedBox) -> bool:
    """Closed separating-axis test between two oriented rectangles."""
    return bool(
        kernels.obb_overlap_single(
            a.cx - b.cx,
            a.cy - b.cy,
            np.cos(a.heading),
            np.sin(a.heading),
            np.cos(b.heading),
            np.sin(b.heading),
            0.5 * a.footprint.length,
            0.5 * a.footprint.width,
            0.5 * b.footprint.length,
            0.5 * b.footprint.width,
        )
    )


def _prepared(waypoints: np.ndarray, footprint: Footprint):
    pos, cos, sin = kernels.interpolated_poses(waypoints)
    centers, radii = kernels.trajectory_discs(pos, footprint.circumradius)
    return pos, cos, sin, centers, radii


def cross_first_hit(set_a, fa: Footprint, set_b, fb: Footprint) -> np.ndarray:
    """(KA, KB) first-hit interpolated step matrix between two sample sets.

    Accepts TrajectorySet or stacked (K, T, 4) arrays; -1 marks pairs
    that never collide.
    """
    wa = set_a.waypoints if isinstance(set_a, TrajectorySet) else np.asarray(set_a)
    wb = set_b.waypoints if isinstance(set_b, TrajectorySet) else np.asarray(set_b)
    if wa.shape[1] != wb.shape[1]:
        raise ContractViolation("trajectory sets are on different time grids")
    pa, ca, sa, dca, dra = _prepared(wa, fa)
    pb, cb, sb, dcb, drb = _prepared(wb, fb)
    return kernels.pair_first_hit(
        pa, ca, sa, pb, cb, sb,
        0.5 * fa.length, 0.5 * fa.width, 0.5 * fb.length, 0.5 * fb.width,
        dca, dra, dcb, drb,
    )


def trajectory_first_hit(a: Trajectory, fa: Footprint, b: Trajectory, fb: Footprint) -> int:
    """First interpolated step at which the two boxes overlap, -1 if never."""
    if not a.same_grid(b):
        raise ContractViolation("trajectories are on different time grids")
    return int(cross_first_hit(a.waypoints[None], fa, b.waypoints[None], fb)[0, 0])


def trajectories_collide(a: Trajectory, fa: Footprint, b: Trajectory, fb: Footprint) -> bool:
    return trajectory_first_hit(a, fa, b, fb) >= 0


def _boundary_arrays(lanes):
    segs = np.vstack([lane.boundary_segments() for lane in lanes])
    mid = 0.5 * (segs[:, :2] + segs[:, 2:])
    rad = 0.5 * np.hypot(segs[:, 2] - segs[:, 0], segs[:, 3] - segs[:, 1])
    return segs, mid, rad


def lane_violation_first_hit(waypoints: np.ndarray, f: Footprint, lanes) -> np.ndarray:
    """Per-sample first interpolated step whose box touches any boundary
    polyline of the given lanes. waypoints: (K, T, 4) or (T, 4)."""
    if not lanes:
        raise ContractViolation("empty lane set")
    wp = np.asarray(waypoints, dtype=np.float64)
    single = wp.ndim == 2
    if single:
        wp = wp[None]
    pos, cos, sin = kernels.interpolated_poses(wp)
    segs, mid, rad = _boundary_arrays(lanes)
    out = kernels.boundary_first_hit(pos, cos, sin, 0.5 * f.length, 0.5 * f.width, segs, mid, rad)
    return out[0] if single else out


def lane_violation(traj: Trajectory, f: Footprint, lanes) -> bool:
    """True iff any interpolated box crosses or touches a lane boundary."""
    return int(lane_violation_first_hit(traj.waypoints, f, lanes)) >= 0
