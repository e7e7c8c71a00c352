"""Numba-jitted alpha-compositing kernels (forward and backward).

Gaussians arrive depth-sorted; both kernels walk them in that order per pixel,
so compositing order matches a per-pixel front-to-back traversal exactly. The
kernels operate on a horizontal band of rows [row0, row1) so callers can
partition work across threads while keeping per-band results deterministic.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def composite_forward(
    mean2d, conic, color, opac, depth, radius,
    row0, row1, width,
    alpha_ceil, skip_alpha, t_cutoff,
    out_color, out_t, out_depth, last_contrib,
):
    n = mean2d.shape[0]
    rows = row1 - row0
    for i in range(rows):
        for j in range(width):
            out_t[i, j] = 1.0
            out_depth[i, j] = 0.0
            last_contrib[i, j] = 0
            for ch in range(3):
                out_color[i, j, ch] = 0.0
    for g in range(n):
        mx = mean2d[g, 0]
        my = mean2d[g, 1]
        r = radius[g]
        j0 = max(0, int(math.ceil(mx - r)))
        j1 = min(width - 1, int(math.floor(mx + r)))
        i0 = max(row0, int(math.ceil(my - r)))
        i1 = min(row1 - 1, int(math.floor(my + r)))
        if j0 > j1 or i0 > i1:
            continue
        ca = conic[g, 0]
        cb = conic[g, 1]
        cc = conic[g, 2]
        for i in range(i0, i1 + 1):
            ti = i - row0
            dy = i - my
            for j in range(j0, j1 + 1):
                t = out_t[ti, j]
                if t < t_cutoff:
                    continue
                dx = j - mx
                power = -0.5 * (ca * dx * dx + cc * dy * dy) - cb * dx * dy
                if power > 0.0:
                    continue
                alpha = opac[g] * math.exp(power)
                if alpha > alpha_ceil:
                    alpha = alpha_ceil
                if alpha < skip_alpha:
                    continue
                w = t * alpha
                for ch in range(3):
                    out_color[ti, j, ch] += w * color[g, ch]
                out_depth[ti, j] += w * depth[g]
                out_t[ti, j] = t * (1.0 - alpha)
                last_contrib[ti, j] = g + 1


@njit(cache=True, nogil=True)
def composite_backward(
    mean2d, conic, color, opac, depth, radius,
    row0, row1, width,
    alpha_ceil, skip_alpha, t_cutoff,
    t_final, last_contrib, dl_dc, background,
    d_mean2d, d_conic, d_opac, d_color,
):
    n = mean2d.shape[0]
    rows = row1 - row0
    # Color accumulated behind the current Gaussian, background included.
    s_behind = np.empty((rows, width, 3), dtype=dl_dc.dtype)
    t_rec = np.empty((rows, width), dtype=dl_dc.dtype)
    for i in range(rows):
        for j in range(width):
            t_rec[i, j] = t_final[i, j]
            for ch in range(3):
                s_behind[i, j, ch] = t_final[i, j] * background[ch]
    for g in range(n - 1, -1, -1):
        mx = mean2d[g, 0]
        my = mean2d[g, 1]
        r = radius[g]
        j0 = max(0, int(math.ceil(mx - r)))
        j1 = min(width - 1, int(math.floor(mx + r)))
        i0 = max(row0, int(math.ceil(my - r)))
        i1 = min(row1 - 1, int(math.floor(my + r)))
        if j0 > j1 or i0 > i1:
            continue
        ca = conic[g, 0]
        cb = conic[g, 1]
        cc = conic[g, 2]
        og = opac[g]
        for i in range(i0, i1 + 1):
            ti = i - row0
            dy = i - my
            for j in range(j0, j1 + 1):
                if last_contrib[ti, j] < g + 1:
                    continue
                dx = j - mx
                power = -0.5 * (ca * dx * dx + cc * dy * dy) - cb * dx * dy
                if power > 0.0:
                    continue
                gval = math.exp(power)
                alpha = og * gval
                clipped = alpha > alpha_ceil
                if clipped:
                    alpha = alpha_ceil
                if alpha < skip_alpha:
                    continue
                om = 1.0 - alpha
                t_rec[ti, j] /= om
                t_here = t_rec[ti, j]
                w = t_here * alpha
                dl_dalpha = 0.0
                for ch in range(3):
                    grad_c = dl_dc[ti, j, ch]
                    d_color[g, ch] += w * grad_c
                    dl_dalpha += grad_c * (t_here * color[g, ch] - s_behind[ti, j, ch] / om)
                    s_behind[ti, j, ch] += w * color[g, ch]
                if clipped:
                    continue
                d_opac[g] += dl_dalpha * gval
                dpower = dl_dalpha * og * gval
                ddx = dpower * (-ca * dx - cb * dy)
                ddy = dpower * (-cc * dy - cb * dx)
                d_mean2d[g, 0] -= ddx
                d_mean2d[g, 1] -= ddy
                d_conic[g, 0] -= dpower * 0.5 * dx * dx
                d_conic[g, 1] -= dpower * dx * dy
                d_conic[g, 2] -= dpower * 0.5 * dy * dy
