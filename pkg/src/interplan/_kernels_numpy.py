"""Pure-numpy twins of the numba kernels.

Same signatures, same pruning logic, same comparison conventions as
`_kernels_numba`; integer outputs are bit-identical, the clothoid
integrator may differ at float rounding level (different summation
order).
"""

import math

import numpy as np


def obb_overlap_single(dx, dy, c1, s1, c2, s2, hl1, hw1, hl2, hw2):
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


def pair_first_hit(pa, cosa, sina, pb, cosb, sinb, hla, hwa, hlb, hwb, ca, ra, cb, rb):
    KA = pa.shape[0]
    KB = pb.shape[0]
    out = np.full((KA, KB), -1, dtype=np.int32)
    dc = ca[:, None, :] - cb[None, :, :]
    close = dc[..., 0] ** 2 + dc[..., 1] ** 2 <= (ra[:, None] + rb[None, :]) ** 2
    if not close.any():
        return out
    ia, jb = np.nonzero(close)
    dx = pa[ia, :, 0] - pb[jb, :, 0]  # (P, S)
    dy = pa[ia, :, 1] - pb[jb, :, 1]
    c1, s1 = cosa[ia], sina[ia]
    c2, s2 = cosb[jb], sinb[jb]
    cc = np.abs(c1 * c2 + s1 * s2)
    ss = np.abs(s1 * c2 - c1 * s2)
    rr = math.hypot(hla, hwa) + math.hypot(hlb, hwb)
    hit = dx * dx + dy * dy <= rr * rr
    hit &= np.abs(dx * c1 + dy * s1) <= hla + hlb * cc + hwb * ss
    hit &= np.abs(dy * c1 - dx * s1) <= hwa + hlb * ss + hwb * cc
    hit &= np.abs(dx * c2 + dy * s2) <= hlb + hla * cc + hwa * ss
    hit &= np.abs(dy * c2 - dx * s2) <= hwb + hla * ss + hwa * cc
    any_hit = hit.any(axis=1)
    first = np.argmax(hit, axis=1).astype(np.int32)
    out[ia[any_hit], jb[any_hit]] = first[any_hit]
    return out


def _segment_interval(e0, e1, half):
    """Entry/exit parameters of one slab for vectorized Liang-Barsky."""
    d = e1 - e0
    with np.errstate(divide="ignore", invalid="ignore"):
        ta = (-half - e0) / d
        tb = (half - e0) / d
    enter = np.minimum(ta, tb)
    leave = np.maximum(ta, tb)
    flat = d == 0.0
    inside = (e0 >= -half) & (e0 <= half)
    enter = np.where(flat, np.where(inside, 0.0, np.inf), enter)
    leave = np.where(flat, np.where(inside, 1.0, -np.inf), leave)
    return enter, leave


def boundary_first_hit(p, cosh, sinh, hl, hw, segs, seg_mid, seg_rad):
    K, S = p.shape[0], p.shape[1]
    circ = math.hypot(hl, hw)
    px = p[..., 0][:, :, None]  # (K, S, 1)
    py = p[..., 1][:, :, None]
    c = cosh[:, :, None]
    sn = sinh[:, :, None]
    mx = seg_mid[None, None, :, 0] - px
    my = seg_mid[None, None, :, 1] - py
    near = mx * mx + my * my <= (seg_rad[None, None, :] + circ) ** 2  # (K, S, M)
    rx0 = segs[None, None, :, 0] - px
    ry0 = segs[None, None, :, 1] - py
    rx1 = segs[None, None, :, 2] - px
    ry1 = segs[None, None, :, 3] - py
    ex0 = rx0 * c + ry0 * sn
    ey0 = ry0 * c - rx0 * sn
    ex1 = rx1 * c + ry1 * sn
    ey1 = ry1 * c - rx1 * sn
    en_x, lv_x = _segment_interval(ex0, ex1, hl)
    en_y, lv_y = _segment_interval(ey0, ey1, hw)
    t0 = np.maximum(0.0, np.maximum(en_x, en_y))
    t1 = np.minimum(1.0, np.minimum(lv_x, lv_y))
    hit = near & (t0 <= t1)  # (K, S, M)
    step_hit = hit.any(axis=2)  # (K, S)
    out = np.full(K, -1, dtype=np.int32)
    any_k = step_hit.any(axis=1)
    out[any_k] = np.argmax(step_hit[any_k], axis=1).astype(np.int32)
    return out


def clothoid_positions(k0s, rates, s_grid, max_step):
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
                n = max(n, n_turn)
                h = ds / n
                s0 = prev + h * np.arange(n)
                s1 = s0 + h
                sm = 0.5 * (s0 + s1)
                th0 = k0 * s0 + 0.5 * c * s0 * s0
                thm = k0 * sm + 0.5 * c * sm * sm
                th1 = k0 * s1 + 0.5 * c * s1 * s1
                x += float(np.sum(h * (np.cos(th0) + 4.0 * np.cos(thm) + np.cos(th1)) / 6.0))
                y += float(np.sum(h * (np.sin(th0) + 4.0 * np.sin(thm) + np.sin(th1)) / 6.0))
            pos[k, t, 0] = x
            pos[k, t, 1] = y
            head[k, t] = k0 * target + 0.5 * c * target * target
            prev = target
    return pos, head


def warmup():
    """No compilation needed for the numpy backend."""
