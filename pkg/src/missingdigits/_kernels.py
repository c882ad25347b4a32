"""Compiled depth-first form of the band-measure refinement (int64 only).

Same local-coordinate recursion as ``measure._band_chunk``, but each level-k_s
cylinder is followed to a fixed stop level instead of stopping on the global
frontier mass. A partial cylinder has at most two descendants that straddle a
target end at every level, so the stack never holds more than one pending chain.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def band_kernel(R, power, b, P, lo_d, hi_d, member, cum, c_num, h_num, E, k_s, stop):
    counts = np.zeros(stop + 1, dtype=np.int64)
    frontier = 0
    T = (b - 1) * power
    TE = T * E
    H0 = lo_d * P * E
    H1 = hi_d * P * E
    step = (b - 1) * P * E
    for i in range(R.size):
        r = R[i]
        X = (r * (b - 1) + P * hi_d) * E + (h_num - c_num) * T
        m = -((-X) // TE) - 1
        a = (b - 1) * ((m * E + c_num - h_num) * power - r * E)
        g = a + (b - 1) * 2 * h_num * power
        if a <= H0 and g >= H1:
            counts[k_s] += 1
            continue
        if g <= H0 or a >= H1:
            continue
        if a < H0:
            a = H0 - 1
        if g > H1:
            g = H1 + 1
        level = k_s
        pending = False
        pa = 0
        pg = 0
        plevel = 0
        while True:
            alive = True
            if level >= stop:
                frontier += 1
                alive = False
            else:
                level += 1
                ba = a * b
                bg = g * b
                d_lo = -((H0 - ba) // step)
                d_hi = (bg - H1) // step
                top = min(max(d_hi + 1, 0), b)
                bot = min(max(d_lo, 0), b)
                if top > bot:
                    counts[level] += cum[top] - cum[bot]
                da = (ba - H0 - 1) // step
                dg = (bg - H0 - 1) // step
                va = member[min(max(da, -1), b) + 1] and da * step > ba - H1
                vg = member[min(max(dg, -1), b) + 1] and dg * step > bg - H1
                if va and vg and da == dg:
                    a = ba - da * step
                    g = bg - da * step
                elif va and vg:
                    pending = True
                    pa = H0 - 1
                    pg = bg - dg * step
                    plevel = level
                    a = ba - da * step
                    g = H1 + 1
                elif va:
                    a = ba - da * step
                    g = H1 + 1
                elif vg:
                    a = H0 - 1
                    g = bg - dg * step
                else:
                    alive = False
            if not alive:
                if pending:
                    pending = False
                    a = pa
                    g = pg
                    level = plevel
                else:
                    break
    return counts, frontier
