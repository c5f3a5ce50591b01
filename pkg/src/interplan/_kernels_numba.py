"""Numba implementations of the collision and rollout inner loops.

Signatures and numerical behavior are mirrored 1:1 by `_kernels_numpy`;
`kernels` picks one at import time. Only plain float arithmetic happens
here (trig tables are precomputed by the callers) so both backends
produce identical results.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _obb_overlap(dx, dy, c1, s1, c2, s2, hl1, hw1, hl2, hw2):
    # Separating-axis test over the 4 box axes; touching counts as overlap.
    ca = abs(c1 * c2 + s1 * s2)
    sa = abs(s1 * c2 - c1 * s2)
    if abs(dx * c1 + dy * s1) > hl1 + hl2 * ca + hw2 * sa:
        return False
    if abs(dy * c1 - dx * s1) > hw1 + hl2 * sa + hw2 * ca:
        return False
    if abs(dx * c2 + dy * s2) > hl2 + hl1 * ca + hw1 * sa:
        return False
    if abs(dy * c2 - dx * s2) > hw2 + hl1 * sa + hw1 * ca:
        return False
    return True


@njit(cache=True)
def obb_overlap_single(dx, dy, c1, s1, c2, s2, hl1, hw1, hl2, hw2):
    return _obb_overlap(dx, dy, c1, s1, c2, s2, hl1, hw1, hl2, hw2)


@njit(cache=True)
def pair_first_hit(pa, cosa, sina, pb, cosb, sinb, hla, hwa, hlb, hwb, ca, ra, cb, rb):
    """First interpolated step at which two samples' boxes overlap.

    pa/pb: (K, S, 2) positions, cosa/sina: (K, S) heading trig,
    ca/ra: per-sample bounding-disc centers (K, 2) and radii (K,)
    already inflated by the box circumradius. Returns (KA, KB) int32
    of first-hit step indices, -1 where the samples never collide.
    """
    KA, S = pa.shape[0], pa.shape[1]
    KB = pb.shape[0]
    out = np.full((KA, KB), -1, dtype=np.int32)
    rr = math.hypot(hla, hwa) + math.hypot(hlb, hwb)
    rr2 = rr * rr
    for i in range(KA):
        for j in range(KB):
            dcx = ca[i, 0] - cb[j, 0]
            dcy = ca[i, 1] - cb[j, 1]
            rad = ra[i] + rb[j]
            if dcx * dcx + dcy * dcy > rad * rad:
                continue
            for s in range(S):
                dx = pa[i, s, 0] - pb[j, s, 0]
                dy = pa[i, s, 1] - pb[j, s, 1]
                if dx * dx + dy * dy > rr2:
                    continue
                if _obb_overlap(
                    dx, dy, cosa[i, s], sina[i, s], cosb[j, s], sinb[j, s], hla, hwa, hlb, hwb
                ):
                    out[i, j] = s
                    break
    return out


@njit(cache=True, inline="always")
def _segment_hits_box(ex0, ey0, ex1, ey1, hl, hw):
    # Liang-Barsky clip of a segment (box frame) against [-hl,hl]x[-hw,hw].
    t0 = 0.0
    t1 = 1.0
    dx = ex1 - ex0
    dy = ey1 - ey0
    if dx == 0.0:
        if ex0 < -hl or ex0 > hl:
            return False
    else:
        ta = (-hl - ex0) / dx
        tb = (hl - ex0) / dx
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
        if t0 > t1:
            return False
    if dy == 0.0:
        if ey0 < -hw or ey0 > hw:
            return False
    else:
        ta = (-hw - ey0) / dy
        tb = (hw - ey0) / dy
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
        if t0 > t1:
            return False
    return True


@njit(cache=True)
def boundary_first_hit(p, cosh, sinh, hl, hw, segs, seg_mid, seg_rad):
    """First interpolated step at which a sample's box touches any segment.

    p: (K, S, 2), cosh/sinh: (K, S), segs: (M, 4) as (x0, y0, x1, y1),
    seg_mid: (M, 2) midpoints, seg_rad: (M,) half-lengths. Returns (K,)
    int32 first-hit step, -1 for never.
    """
    K, S = p.shape[0], p.shape[1]
    M = segs.shape[0]
    out = np.full(K, -1, dtype=np.int32)
    circ = math.hypot(hl, hw)
    for k in range(K):
        for s in range(S):
            px = p[k, s, 0]
            py = p[k, s, 1]
            c = cosh[k, s]
            sn = sinh[k, s]
            hit = False
            for m in range(M):
                mx = seg_mid[m, 0] - px
                my = seg_mid[m, 1] - py
                reach = seg_rad[m] + circ
                if mx * mx + my * my > reach * reach:
                    continue
                rx0 = segs[m, 0] - px
                ry0 = segs[m, 1] - py
                rx1 = segs[m, 2] - px
                ry1 = segs[m, 3] - py
                ex0 = rx0 * c + ry0 * sn
                ey0 = ry0 * c - rx0 * sn
                ex1 = rx1 * c + ry1 * sn
                ey1 = ry1 * c - rx1 * sn
                if _segment_hits_box(ex0, ey0, ex1, ey1, hl, hw):
                    hit = True
                    break
            if hit:
                out[k] = s
                break
    return out


@njit(cache=True)
def clothoid_positions(k0s, rates, s_grid, max_step):
    """Integrate body-frame clothoid positions at requested arc lengths.

    Curvature is kappa(s) = k0 + rate * s; heading is its exact integral.
    Positions use composite Simpson with arc-length step <= max_step,
    refined further so no step turns the heading by more than pi/2.
    Returns (K, T, 2) positions and (K, T) headings, body frame
    (start at origin, initial heading 0).
    """
    K, T = s_grid.shape
    pos = np.zeros((K, T, 2))
    head = np.zeros((K, T))
    for k in range(K):
        k0 = k0s[k]
        c = rates[k]
        x = 0.0
        y = 0.0
        prev = 0.0
        for t in range(T):
            target = s_grid[k, t]
            ds = target - prev
            if ds > 0.0:
                kmax = max(abs(k0 + c * prev), abs(k0 + c * target))
                n = int(math.ceil(ds / max_step))
                n_turn = int(math.ceil(ds * kmax / (0.5 * math.pi)))
                if n_turn > n:
                    n = n_turn
                h = ds / n
                for i in range(n):
                    s0 = prev + i * h
                    s1 = s0 + h
                    sm = 0.5 * (s0 + s1)
                    th0 = k0 * s0 + 0.5 * c * s0 * s0
                    thm = k0 * sm + 0.5 * c * sm * sm
                    th1 = k0 * s1 + 0.5 * c * s1 * s1
                    x += h * (math.cos(th0) + 4.0 * math.cos(thm) + math.cos(th1)) / 6.0
                    y += h * (math.sin(th0) + 4.0 * math.sin(thm) + math.sin(th1)) / 6.0
            pos[k, t, 0] = x
            pos[k, t, 1] = y
            head[k, t] = k0 * target + 0.5 * c * target * target
            prev = target
    return pos, head


def warmup():
    """Force-compile every kernel (tiny inputs) so later timings are steady."""
    z = np.zeros((1, 2, 2))
    o = np.ones((1, 2))
    pair_first_hit(z, o, o * 0, z, o, o * 0, 1.0, 1.0, 1.0, 1.0, z[:, 0], o[:, 0] * 9, z[:, 0], o[:, 0] * 9)
    segs = np.array([[0.0, 0.0, 1.0, 0.0]])
    boundary_first_hit(z, o, o * 0, 1.0, 1.0, segs, segs[:, :2], np.array([0.5]))
    clothoid_positions(np.zeros(1), np.zeros(1), np.zeros((1, 2)), 0.05)
    obb_overlap_single(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0)
