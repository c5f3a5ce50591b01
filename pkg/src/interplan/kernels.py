"""Kernel backend selection plus shared pose-preparation helpers.

Set INTERPLAN_NO_NUMBA=1 to force the pure-numpy fallback; otherwise the
numba backend is used when importable. `interplan bench` compares the
two backends on representative workloads.
"""

from __future__ import annotations

import os

import numpy as np

from .types import COL_H, wrap_angle

if os.environ.get("INTERPLAN_NO_NUMBA", "0") not in ("", "0"):
    from . import _kernels_numpy as _impl

    BACKEND = "numpy"
else:
    try:
        from . import _kernels_numba as _impl

        BACKEND = "numba"
    except ImportError:
        from . import _kernels_numpy as _impl

        BACKEND = "numpy"

pair_first_hit = _impl.pair_first_hit
boundary_first_hit = _impl.boundary_first_hit
clothoid_positions = _impl.clothoid_positions
obb_overlap_single = _impl.obb_overlap_single
warmup = _impl.warmup


def interpolated_poses(waypoints: np.ndarray):
    """Insert midpoints between waypoints: (K, T, 4) -> positions/trig arrays.

    Midpoint position is the chord midpoint; midpoint heading is the
    shortest-path average of the bracketing headings. Returns
    (pos (K, S, 2), cos (K, S), sin (K, S)) with S = 2T - 1.
    """
    wp = np.asarray(waypoints, dtype=np.float64)
    if wp.ndim == 2:
        wp = wp[None]
    K, T = wp.shape[0], wp.shape[1]
    S = 2 * T - 1
    pos = np.empty((K, S, 2))
    head = np.empty((K, S))
    pos[:, ::2] = wp[:, :, :2]
    head[:, ::2] = wp[:, :, COL_H]
    pos[:, 1::2] = 0.5 * (wp[:, :-1, :2] + wp[:, 1:, :2])
    h = wp[:, :, COL_H]
    dh = wrap_angle(h[:, 1:] - h[:, :-1])
    head[:, 1::2] = wrap_angle(h[:, :-1] + 0.5 * dh)
    return pos, np.cos(head), np.sin(head)


def trajectory_discs(pos: np.ndarray, circumradius: float):
    """Per-sample bounding discs over all interpolated positions.

    pos: (K, S, 2). Returns (centers (K, 2), radii (K,)) with radii
    inflated by the footprint circumradius, so disjoint discs prove the
    samples can never collide.
    """
    lo = pos.min(axis=1)
    hi = pos.max(axis=1)
    centers = 0.5 * (lo + hi)
    radii = np.linalg.norm(pos - centers[:, None, :], axis=2).max(axis=1) + circumradius
    return centers, radii


def step_to_time_index(step: int) -> int:
    """Map an interpolated step index to the first waypoint index it counts
    against: midpoints between k and k+1 bucket with waypoint k+1."""
    return (step + 1) // 2
