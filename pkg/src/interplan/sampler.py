"""Kinematically feasible trajectory sampling.

Each sample follows one curve family — straight line, circular arc, or
clothoid (curvature linear in arc length) — traversed with a constant
sampled acceleration. Speed clamps at zero: vehicles stop, they never
reverse. Waypoints sit at exact arc-length positions s(t) along the
curve, where s(t) is the closed-form integral of the clamped speed.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError
from .types import KinematicState, TimeGrid, Trajectory, TrajectorySet
from .types import MODE_ARC, MODE_CLOTHOID, MODE_EXTERNAL, MODE_STRAIGHT, wrap_angle

# Sampled |radius| below this is rejected and redrawn.
MIN_TURN_RADIUS = 2.0

# Slot index reserved for the ego vehicle in derive_seed.
EGO_SLOT = 2**20


def derive_seed(base: int, scene_id: str, slot: int) -> tuple:
    """Stable per-(run, scene, vehicle) seed so reruns regenerate identical sets.

    slot is the actor index, or EGO_SLOT for the ego sampler.
    """
    return (int(base), zlib.crc32(scene_id.encode("utf-8")), int(slot))

# Arc-length integration step for clothoid rollouts (meters).
CLOTHOID_STEP = 0.05

_MODE_NAMES = (MODE_STRAIGHT, MODE_ARC, MODE_CLOTHOID)


@dataclass(frozen=True)
class SamplerConfig:
    """Trajectory sampler parameters.

    mode_weights are the draw probabilities for (straight, arc, clothoid).
    Clothoid initial curvature is sampled as +-1/radius with radius drawn
    from radius_range, the same pool the arc mode uses; the sharpness
    range controls its linear curvature rate.
    """

    mode_weights: tuple = (0.3, 0.2, 0.5)
    accel_range: tuple = (-4.0, 3.0)
    radius_range: tuple = (6.0, 200.0)
    clothoid_sharpness_range: tuple = (-0.02, 0.02)
    num_samples: int = 200
    rng_seed: int = 0

    def validate(self):
        w = np.asarray(self.mode_weights, dtype=np.float64)
        if w.shape != (3,) or np.any(w < 0.0) or abs(w.sum() - 1.0) > 1e-9:
            raise ConfigError(f"mode_weights must be 3 non-negative values summing to 1, got {self.mode_weights}")
        for name, rng in (
            ("accel_range", self.accel_range),
            ("radius_range", self.radius_range),
            ("clothoid_sharpness_range", self.clothoid_sharpness_range),
        ):
            if len(rng) != 2 or not (rng[0] <= rng[1]):
                raise ConfigError(f"{name} must be a (lo, hi) interval with lo <= hi, got {rng}")
        if self.radius_range[0] <= 0.0:
            raise ConfigError("radius_range must be positive")
        if self.num_samples < 1:
            raise ConfigError("num_samples must be >= 1")


def displacement(v0, accel, t):
    """Arc length traveled by time t under constant accel, speed clamped at 0."""
    t = np.asarray(t, dtype=np.float64)
    if accel < 0.0:
        t_eff = np.minimum(t, v0 / -accel)
    else:
        t_eff = t
    return v0 * t_eff + 0.5 * accel * t_eff**2


def _displacement_grid(v0s, accels, times):
    """Vectorized displacement: (K,) states x (T,) times -> (K, T)."""
    t = times[None, :]
    a = accels[:, None]
    v = v0s[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        t_stop = np.where(a < 0.0, v / -a, np.inf)
    t_eff = np.minimum(t, t_stop)
    return v * t_eff + 0.5 * a * t_eff**2


def _assemble(init: KinematicState, xb, yb, hb, times, mode):
    """Rotate body-frame points (start at origin, heading 0) into the world."""
    c, s = np.cos(init.heading), np.sin(init.heading)
    x = init.x + c * xb - s * yb
    y = init.y + s * xb + c * yb
    wp = np.stack([x, y, wrap_angle(init.heading + hb), np.broadcast_to(times, x.shape)], axis=-1)
    return wp


def straight_rollout(init: KinematicState, accel: float, grid: TimeGrid) -> Trajectory:
    """Constant-heading rollout; displacement follows the clamped speed law."""
    s = displacement(init.speed, accel, grid.times)
    wp = _assemble(init, s, np.zeros_like(s), np.zeros_like(s), grid.times, MODE_STRAIGHT)
    return Trajectory(wp, mode=MODE_STRAIGHT)


def arc_rollout(init: KinematicState, radius_signed: float, accel: float, grid: TimeGrid) -> Trajectory:
    """Circular-arc rollout; positive radius turns left, negative right."""
    if abs(radius_signed) < MIN_TURN_RADIUS:
        raise ConfigError(f"|radius| below minimum turning radius {MIN_TURN_RADIUS}")
    s = displacement(init.speed, accel, grid.times)
    theta = s / radius_signed
    xb = radius_signed * np.sin(theta)
    yb = radius_signed * (1.0 - np.cos(theta))
    wp = _assemble(init, xb, yb, theta, grid.times, MODE_ARC)
    return Trajectory(wp, mode=MODE_ARC)


def clothoid_rollout(
    init: KinematicState, kappa0: float, sharpness: float, accel: float, grid: TimeGrid
) -> Trajectory:
    """Rollout along kappa(s) = kappa0 + sharpness * s (numerical integration)."""
    s = displacement(init.speed, accel, grid.times)
    pos, head = kernels.clothoid_positions(
        np.array([kappa0]), np.array([sharpness]), s[None, :], CLOTHOID_STEP
    )
    wp = _assemble(init, pos[0, :, 0], pos[0, :, 1], head[0], grid.times, MODE_CLOTHOID)
    return Trajectory(wp, mode=MODE_CLOTHOID)


def sample_trajectories(init: KinematicState, cfg: SamplerConfig, grid: TimeGrid) -> TrajectorySet:
    """Draw cfg.num_samples trajectories from the three curve families.

    Deterministic for a fixed cfg.rng_seed. Every sample starts exactly at
    the initial pose. Radii whose magnitude falls below MIN_TURN_RADIUS
    are redrawn so the returned set always has exactly num_samples entries.
    """
    cfg.validate()
    K = cfg.num_samples
    T = grid.num_waypoints
    rng = np.random.default_rng(cfg.rng_seed)
    modes = rng.choice(3, size=K, p=np.asarray(cfg.mode_weights, dtype=np.float64))
    accels = rng.uniform(cfg.accel_range[0], cfg.accel_range[1], size=K)
    radii = rng.uniform(cfg.radius_range[0], cfg.radius_range[1], size=K)
    for _ in range(1000):
        bad = radii < MIN_TURN_RADIUS
        if not bad.any():
            break
        radii[bad] = rng.uniform(cfg.radius_range[0], cfg.radius_range[1], size=int(bad.sum()))
    else:
        raise ConfigError("radius_range cannot produce radii above the minimum turning radius")
    signs = rng.integers(0, 2, size=K) * 2.0 - 1.0
    sharps = rng.uniform(
        cfg.clothoid_sharpness_range[0], cfg.clothoid_sharpness_range[1], size=K
    )

    s_grid = _displacement_grid(np.full(K, init.speed), accels, grid.times)
    xb = np.empty((K, T))
    yb = np.empty((K, T))
    hb = np.empty((K, T))

    m_straight = modes == 0
    if m_straight.any():
        xb[m_straight] = s_grid[m_straight]
        yb[m_straight] = 0.0
        hb[m_straight] = 0.0

    m_arc = modes == 1
    if m_arc.any():
        r = (signs * radii)[m_arc][:, None]
        theta = s_grid[m_arc] / r
        xb[m_arc] = r * np.sin(theta)
        yb[m_arc] = r * (1.0 - np.cos(theta))
        hb[m_arc] = theta

    m_clo = modes == 2
    if m_clo.any():
        k0 = (signs / radii)[m_clo]
        pos, head = kernels.clothoid_positions(k0, sharps[m_clo], s_grid[m_clo], CLOTHOID_STEP)
        xb[m_clo] = pos[:, :, 0]
        yb[m_clo] = pos[:, :, 1]
        hb[m_clo] = head

    wp = _assemble(init, xb, yb, hb, grid.times, None)
    return TrajectorySet(wp, [_MODE_NAMES[m] for m in modes])


def rollout_piecewise(init: KinematicState, grid: TimeGrid, segments) -> Trajectory:
    """Chain constant-curvature pieces into one trajectory on the grid.

    segments: list of (duration_s, curvature_1pm, accel) tuples whose
    durations must be multiples of grid.dt and cover the horizon. Used by
    scripted scenario policies (lane changes, turns) so ground-truth
    futures come from the same dynamic family as the sampler.
    """
    dt = grid.dt
    total = sum(d for d, _, _ in segments)
    if abs(total - grid.horizon_s) > 1e-9:
        raise ConfigError("segment durations must cover the horizon exactly")
    x, y, h, v = init.x, init.y, init.heading, init.speed
    wp = np.empty((grid.num_waypoints, 4))
    wp[0] = (x, y, h, 0.0)
    idx = 1
    t_abs = 0.0
    for duration, curvature, accel in segments:
        n = int(round(duration / dt))
        if abs(n * dt - duration) > 1e-9 or n < 1:
            raise ConfigError("segment durations must be positive multiples of grid.dt")
        local = np.linspace(dt, duration, n)
        s = displacement(v, accel, local)
        if curvature == 0.0:
            xs = x + np.cos(h) * s
            ys = y + np.sin(h) * s
            hs = np.full(n, h)
        else:
            r = 1.0 / curvature
            theta = s / r
            xs = x + r * (np.sin(h + theta) - np.sin(h))
            ys = y - r * (np.cos(h + theta) - np.cos(h))
            hs = h + theta
        for i in range(n):
            wp[idx] = (xs[i], ys[i], wrap_angle(hs[i]), t_abs + local[i])
            idx += 1
        x, y, h = xs[-1], ys[-1], hs[-1]
        v = max(v + accel * duration, 0.0)
        t_abs += duration
    return Trajectory(wp, mode=MODE_EXTERNAL)
