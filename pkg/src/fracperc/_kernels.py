"""Compiled inner loops for line-grid sweeps."""

import math

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _chord(x0, y0, h, px, py, c, s):
    t0x = (x0 - px) / c
    t1x = (x0 + h - px) / c
    t0y = (y0 - py) / s
    t1y = (y0 + h - py) / s
    lo = t0x if t0x > t0y else t0y
    hi = t1x if t1x < t1y else t1y
    return hi - lo if hi > lo else 0.0


@njit(cache=True)
def grid_sweep(kx, ky, h, angles, anchors, dz, slack):
    """Max over anchors of the summed chord length and incidence count, per angle.

    ``anchors[j-1]`` must equal ``j * dz`` up to rounding (j = 1..len(anchors)).
    Returns (best_length, best_anchor_pos, best_count) arrays indexed by angle;
    ties keep the anchor reached first in cube storage order.
    """
    na = angles.shape[0]
    n_anchor = anchors.shape[0]
    nc = kx.shape[0]
    best_len = np.zeros(na)
    best_pos = np.full(na, -1, dtype=np.int64)
    best_cnt = np.zeros(na, dtype=np.int64)
    chunk = 64
    n_chunks = (na + chunk - 1) // chunk
    r2 = math.sqrt(2.0)
    for b in range(n_chunks):
        buf = np.zeros(n_anchor + 2)
        cnt = np.zeros(n_anchor + 2, dtype=np.int64)
        lo_j = np.empty(nc, dtype=np.int64)
        hi_j = np.empty(nc, dtype=np.int64)
        for a in range(b * chunk, min(na, (b + 1) * chunk)):
            c = math.cos(angles[a])
            s = math.sin(angles[a])
            f = r2 / (s + c) / dz
            for i in range(nc):
                x0 = kx[i] * h
                y0 = ky[i] * h
                smin = -(x0 + h) * s + y0 * c
                smax = -x0 * s + (y0 + h) * c
                j0 = max(1, int(math.floor((c - smax) * f)))
                j1 = min(n_anchor, int(math.ceil((c - smin) * f)))
                lo_j[i] = j0
                hi_j[i] = j1
                for j in range(j0, j1 + 1):
                    z = anchors[j - 1]
                    ch = _chord(x0, y0, h, z / r2, 1.0 - z / r2, c, s)
                    if ch > 0.0:
                        buf[j] += ch
                        if ch > slack * h:
                            cnt[j] += 1
            bl = 0.0
            bp = -1
            bc = 0
            for i in range(nc):
                for j in range(lo_j[i], hi_j[i] + 1):
                    if buf[j] > bl:
                        bl = buf[j]
                        bp = j - 1
                    if cnt[j] > bc:
                        bc = cnt[j]
                    buf[j] = 0.0
                    cnt[j] = 0
            best_len[a] = bl
            best_pos[a] = bp
            best_cnt[a] = bc
    return best_len, best_pos, best_cnt
