"""Core domain types: kinematic states, time grids, trajectories, footprints.

All quantities are SI: meters, seconds, radians, m/s. Headings are kept in
(-pi, pi]. A trajectory is a (T, 4) float64 array with columns
(x, y, heading, t); t includes the initial waypoint at 0 s.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractViolation

# Trajectory array column indices.
COL_X, COL_Y, COL_H, COL_T = 0, 1, 2, 3

MODE_STRAIGHT = "straight"
MODE_ARC = "arc"
MODE_CLOTHOID = "clothoid"
MODE_EXTERNAL = "external"
MODES = (MODE_STRAIGHT, MODE_ARC, MODE_CLOTHOID, MODE_EXTERNAL)


def wrap_angle(a):
    """Normalize angles to (-pi, pi]. Works on scalars and arrays."""
    r = np.remainder(np.asarray(a, dtype=np.float64) + np.pi, 2.0 * np.pi) - np.pi
    # remainder lands in [-pi, pi); fold the open edge onto +pi
    r = np.where(r == -np.pi, np.pi, r)
    if np.ndim(a) == 0:
        return float(r)
    return r


@dataclass(frozen=True)
class KinematicState:
    """Planar vehicle state: position, heading, forward speed (>= 0)."""

    x: float
    y: float
    heading: float
    speed: float

    def __post_init__(self):
        if self.speed < 0.0:
            raise ConfigError(f"speed must be non-negative, got {self.speed}")
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    @property
    def position(self):
        return np.array([self.x, self.y], dtype=np.float64)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform waypoint timing: num_waypoints points covering [0, horizon_s]."""

    horizon_s: float = 3.0
    num_waypoints: int = 7

    def __post_init__(self):
        if self.num_waypoints < 2:
            raise ConfigError("TimeGrid needs at least 2 waypoints")
        if self.horizon_s <= 0.0:
            raise ConfigError("TimeGrid horizon must be positive")

    @property
    def dt(self) -> float:
        return self.horizon_s / (self.num_waypoints - 1)

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon_s, self.num_waypoints)


@dataclass(frozen=True)
class Footprint:
    """Rectangular vehicle footprint, length along heading."""

    length: float = 4.5
    width: float = 2.0

    def __post_init__(self):
        if self.length <= 0.0 or self.width <= 0.0:
            raise ConfigError("footprint dimensions must be positive")

    @property
    def circumradius(self) -> float:
        return 0.5 * float(np.hypot(self.length, self.width))


@dataclass(frozen=True)
class OrientedBox:
    """A rectangle with center, heading and footprint dimensions."""

    cx: float
    cy: float
    heading: float
    footprint: Footprint

    @property
    def corners(self) -> np.ndarray:
        """(4, 2) corner coordinates, counter-clockwise."""
        c, s = np.cos(self.heading), np.sin(self.heading)
        hl, hw = 0.5 * self.footprint.length, 0.5 * self.footprint.width
        local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.cx, self.cy])


@dataclass(frozen=True)
class Trajectory:
    """A timed sequence of poses: (T, 4) array of (x, y, heading, t)."""

    waypoints: np.ndarray
    mode: str = MODE_EXTERNAL

    def __post_init__(self):
        wp = np.asarray(self.waypoints, dtype=np.float64)
        if wp.ndim != 2 or wp.shape[1] != 4:
            raise ContractViolation(f"waypoints must be (T, 4), got {wp.shape}")
        if wp.shape[0] < 2:
            raise ContractViolation("trajectory needs at least 2 waypoints")
        if np.any(np.diff(wp[:, COL_T]) <= 0.0):
            raise ContractViolation("timestamps must be strictly increasing")
        if self.mode not in MODES:
            raise ContractViolation(f"unknown mode {self.mode!r}")
        object.__setattr__(self, "waypoints", wp)

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return self.mode == other.mode and np.array_equal(self.waypoints, other.waypoints)

    def __len__(self) -> int:
        return self.waypoints.shape[0]

    @property
    def xy(self) -> np.ndarray:
        return self.waypoints[:, :2]

    @property
    def headings(self) -> np.ndarray:
        return self.waypoints[:, COL_H]

    @property
    def times(self) -> np.ndarray:
        return self.waypoints[:, COL_T]

    def same_grid(self, other: "Trajectory") -> bool:
        return self.waypoints.shape[0] == other.waypoints.shape[0] and np.array_equal(
            self.times, other.times
        )


@dataclass
class TrajectorySet:
    """K trajectories on a shared grid, stored stacked as (K, T, 4).

    The stacked layout is what the collision kernels and the samplers
    operate on; `trajectory(k)` gives a single-trajectory view.
    """

    waypoints: np.ndarray
    modes: list = field(default_factory=list)

    def __post_init__(self):
        wp = np.asarray(self.waypoints, dtype=np.float64)
        if wp.ndim != 3 or wp.shape[2] != 4:
            raise ContractViolation(f"stacked waypoints must be (K, T, 4), got {wp.shape}")
        if len(self.modes) != wp.shape[0]:
            raise ContractViolation("one mode tag per trajectory required")
        self.waypoints = wp

    def __len__(self) -> int:
        return self.waypoints.shape[0]

    def __eq__(self, other):
        if not isinstance(other, TrajectorySet):
            return NotImplemented
        return self.modes == other.modes and np.array_equal(self.waypoints, other.waypoints)

    @property
    def num_samples(self) -> int:
        return self.waypoints.shape[0]

    @property
    def num_waypoints(self) -> int:
        return self.waypoints.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.waypoints[0, :, COL_T]

    def trajectory(self, k: int) -> Trajectory:
        return Trajectory(self.waypoints[k], mode=self.modes[k])

    def as_trajectories(self) -> list:
        return [self.trajectory(k) for k in range(len(self))]

    @staticmethod
    def from_trajectories(trajs) -> "TrajectorySet":
        trajs = list(trajs)
        if not trajs:
            raise ContractViolation("empty trajectory set")
        t0 = trajs[0]
        for t in trajs[1:]:
            if not t0.same_grid(t):
                raise ContractViolation("trajectories are on different time grids")
        wp = np.stack([t.waypoints for t in trajs])
        return TrajectorySet(wp, [t.mode for t in trajs])
