"""Lane geometry: polyline centerlines with scalar width.

Lanes carry no graph topology beyond their id; routes are ordered id
sequences. Boundary polylines are derived by offsetting the centerline
along per-vertex normals (miter joins, exact for straight lanes).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .types import wrap_angle


@dataclass
class LaneGeometry:
    """A lane: centerline polyline (M, 2) plus constant width."""

    lane_id: str
    centerline: np.ndarray
    width: float

    def __post_init__(self):
        cl = np.asarray(self.centerline, dtype=np.float64)
        if cl.ndim != 2 or cl.shape[1] != 2 or cl.shape[0] < 2:
            raise ConfigError(f"centerline must be (M>=2, 2), got {cl.shape}")
        seg = np.diff(cl, axis=0)
        if np.any(np.hypot(seg[:, 0], seg[:, 1]) <= 0.0):
            raise ConfigError("consecutive centerline points must be distinct")
        if self.width <= 0.0:
            raise ConfigError("lane width must be positive")
        self.centerline = cl
        self._seg = seg
        self._seg_len = np.hypot(seg[:, 0], seg[:, 1])
        self._cum_s = np.concatenate([[0.0], np.cumsum(self._seg_len)])
        self._tangent = seg / self._seg_len[:, None]

    def __eq__(self, other):
        if not isinstance(other, LaneGeometry):
            return NotImplemented
        return (
            self.lane_id == other.lane_id
            and self.width == other.width
            and np.array_equal(self.centerline, other.centerline)
        )

    @property
    def length(self) -> float:
        return float(self._cum_s[-1])

    def boundary(self, side: int) -> np.ndarray:
        """Offset polyline at +width/2 (side=+1, left) or -width/2 (side=-1)."""
        normals = np.empty_like(self.centerline)
        # vertex normal = normalized average of adjacent segment normals
        seg_n = np.stack([-self._tangent[:, 1], self._tangent[:, 0]], axis=1)
        normals[0] = seg_n[0]
        normals[-1] = seg_n[-1]
        if len(seg_n) > 1:
            avg = seg_n[:-1] + seg_n[1:]
            avg /= np.maximum(np.hypot(avg[:, 0], avg[:, 1])[:, None], 1e-12)
            normals[1:-1] = avg
        return self.centerline + side * 0.5 * self.width * normals

    def boundary_segments(self) -> np.ndarray:
        """Both boundary polylines as an (S, 4) array of segments (x0,y0,x1,y1)."""
        segs = []
        for side in (+1, -1):
            b = self.boundary(side)
            segs.append(np.hstack([b[:-1], b[1:]]))
        return np.vstack(segs)

    def project(self, points: np.ndarray):
        """Project points onto the centerline.

        Parameters
        ----------
        points : (P, 2) array.

        Returns
        -------
        s : (P,) arc-length of the closest centerline point (clamped to ends).
        lateral : (P,) signed lateral offset (positive = left of travel).
        tangent_heading : (P,) heading of the closest segment.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        a = self.centerline[:-1]  # (S, 2)
        d = self._seg  # (S, 2)
        len2 = self._seg_len**2
        rel = pts[:, None, :] - a[None, :, :]  # (P, S, 2)
        t = np.clip(np.einsum("psd,sd->ps", rel, d) / len2, 0.0, 1.0)
        foot = a[None] + t[:, :, None] * d[None]
        dist2 = np.sum((pts[:, None, :] - foot) ** 2, axis=2)
        best = np.argmin(dist2, axis=1)  # (P,)
        ar = np.arange(len(pts))
        tb = t[ar, best]
        s = self._cum_s[best] + tb * self._seg_len[best]
        tan = self._tangent[best]
        offs = pts - foot[ar, best]
        lateral = tan[:, 0] * offs[:, 1] - tan[:, 1] * offs[:, 0]
        tangent_heading = np.arctan2(tan[:, 1], tan[:, 0])
        return s, lateral, tangent_heading

    def distance(self, point) -> float:
        """Euclidean distance from a point to the centerline polyline."""
        pt = np.asarray(point, dtype=np.float64)
        a = self.centerline[:-1]
        t = np.clip(((pt - a) * self._seg).sum(axis=1) / self._seg_len**2, 0.0, 1.0)
        foot = a + t[:, None] * self._seg
        return float(np.min(np.hypot(*(pt - foot).T)))


def nearest_lane(lanes, point) -> int:
    """Index of the lane whose centerline is closest to `point`."""
    if not lanes:
        raise ConfigError("empty lane list")
    pt = np.asarray(point, dtype=np.float64)[None, :]
    dists = []
    for lane in lanes:
        a = lane.centerline[:-1]
        d = lane._seg
        t = np.clip(np.einsum("pd,sd->ps", pt, d) - np.einsum("sd,sd->s", a, d), 0.0, None)
        t = np.clip(t / lane._seg_len**2, 0.0, 1.0)
        foot = a + t[0][:, None] * d
        dists.append(np.min(np.hypot(*(pt[0] - foot).T)))
    return int(np.argmin(dists))


@dataclass
class Route:
    """Ordered lane sequence with a concatenated reference centerline."""

    lanes: list
    _cl: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.lanes:
            raise ConfigError("route needs at least one lane")
        pieces = [self.lanes[0].centerline]
        for lane in self.lanes[1:]:
            cl = lane.centerline
            # drop a duplicated joint vertex if the lanes abut exactly
            if np.allclose(pieces[-1][-1], cl[0]):
                cl = cl[1:]
            pieces.append(cl)
        self._cl = np.vstack(pieces)
        self.reference = LaneGeometry("route", self._cl, self.lanes[0].width)

    def project(self, points):
        return self.reference.project(points)

    def heading_misalignment(self, points, headings) -> np.ndarray:
        _, _, tangent = self.project(points)
        return np.abs(wrap_angle(np.asarray(headings) - tangent))
