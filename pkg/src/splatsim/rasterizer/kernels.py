"""Numba blend kernels. Splat arrays arrive pre-sorted front-to-back; tile
lists hold indices into them in that order, so per-pixel iteration order is
the global depth order. The backward kernel stays serial: a splat can appear
in several tiles and the accumulations must not race.
"""

import numpy as np
from numba import config, njit, prange

from .projection import T_EPS

if config.THREADING_LAYER == "default":
    config.THREADING_LAYER = "omp"  # the bundled tbb is too old and warns


@njit(cache=True, parallel=True, fastmath=True)
def forward_kernel(
    width, height, tile_size, ntx, nty,
    offsets, ids,
    means, conics, zs, colors, opacs, power_skip,
    out_rgb, out_depth, out_alpha, out_dist, n_contrib, final_t,
):
    for t in prange(ntx * nty):
        ty = t // ntx
        tx = t - ty * ntx
        x0 = tx * tile_size
        y0 = ty * tile_size
        x1 = min(x0 + tile_size, width)
        y1 = min(y0 + tile_size, height)
        s = offsets[t]
        e = offsets[t + 1]
        for py in range(y0, y1):
            pyc = py + 0.5
            for px in range(x0, x1):
                pxc = px + 0.5
                trans = 1.0
                cr = 0.0
                cg = 0.0
                cb = 0.0
                dep = 0.0
                acc = 0.0
                wz = 0.0
                dist = 0.0
                cnt = 0
                for k in range(s, e):
                    m = ids[k]
                    dx = pxc - means[m, 0]
                    dy = pyc - means[m, 1]
                    power = 0.5 * (conics[m, 0] * dx * dx + conics[m, 2] * dy * dy) + conics[m, 1] * dx * dy
                    if power > power_skip:
                        cnt += 1
                        continue
                    alpha = opacs[m] * np.exp(-power)
                    if alpha > 0.99:
                        alpha = 0.99
                    w = alpha * trans
                    dist += w * (zs[m] * acc - wz)
                    cr += colors[m, 0] * w
                    cg += colors[m, 1] * w
                    cb += colors[m, 2] * w
                    dep += zs[m] * w
                    acc += w
                    wz += zs[m] * w
                    trans *= 1.0 - alpha
                    cnt += 1
                    if trans < T_EPS:
                        break
                out_rgb[py, px, 0] = cr
                out_rgb[py, px, 1] = cg
                out_rgb[py, px, 2] = cb
                out_depth[py, px] = dep
                out_alpha[py, px] = acc
                out_dist[py, px] = dist
                n_contrib[py, px] = cnt
                final_t[py, px] = trans


@njit(cache=True, fastmath=True)
def backward_kernel(
    width, height, tile_size, ntx, nty,
    offsets, ids,
    means, conics, zs, colors, opacs, power_skip,
    n_contrib, final_t, total_alpha, total_wz,
    grad_rgb, grad_depth, grad_dist, bg,
    d_color, d_opac, d_mean2d, d_conic, d_z,
):
    for t in range(ntx * nty):
        ty = t // ntx
        tx = t - ty * ntx
        x0 = tx * tile_size
        y0 = ty * tile_size
        x1 = min(x0 + tile_size, width)
        y1 = min(y0 + tile_size, height)
        s = offsets[t]
        for py in range(y0, y1):
            pyc = py + 0.5
            for px in range(x0, x1):
                pxc = px + 0.5
                cnt = n_contrib[py, px]
                if cnt == 0:
                    continue
                gr = grad_rgb[py, px, 0]
                gg = grad_rgb[py, px, 1]
                gb = grad_rgb[py, px, 2]
                gd = grad_depth[py, px]
                gdist = grad_dist[py, px]
                gbg = gr * bg[0] + gg * bg[1] + gb * bg[2]
                a_tot = total_alpha[py, px]
                wz_tot = total_wz[py, px]
                trans = final_t[py, px]
                # suffix accumulators over already-visited (deeper) splats
                s_r = 0.0
                s_g = 0.0
                s_b = 0.0
                s_z = 0.0
                s_w = 0.0
                s_wg = 0.0
                for k in range(s + cnt - 1, s - 1, -1):
                    m = ids[k]
                    dx = pxc - means[m, 0]
                    dy = pyc - means[m, 1]
                    power = 0.5 * (conics[m, 0] * dx * dx + conics[m, 2] * dy * dy) + conics[m, 1] * dx * dy
                    if power > power_skip:
                        continue
                    raw = opacs[m] * np.exp(-power)
                    clamp = raw > 0.99
                    alpha = 0.99 if clamp else raw
                    one_m = 1.0 - alpha
                    trans /= one_m            # transmittance before this splat
                    w = alpha * trans
                    z = zs[m]
                    w_before = a_tot - w - s_w
                    z_before = wz_tot - w * z - s_z
                    g_pair = z * w_before - z_before + s_z - z * s_w
                    d_alpha = (
                        gr * (colors[m, 0] * trans - s_r / one_m)
                        + gg * (colors[m, 1] * trans - s_g / one_m)
                        + gb * (colors[m, 2] * trans - s_b / one_m)
                        + gd * (z * trans - s_z / one_m)
                        - gbg * (trans - s_w / one_m)
                        + gdist * (g_pair * trans - s_wg / one_m)
                    )
                    d_color[m, 0] += gr * w
                    d_color[m, 1] += gg * w
                    d_color[m, 2] += gb * w
                    d_z[m] += gd * w + gdist * w * (w_before - s_w)
                    if not clamp:
                        d_opac[m] += d_alpha * np.exp(-power)
                        d_power = -d_alpha * alpha
                        d_conic[m, 0] += d_power * 0.5 * dx * dx
                        d_conic[m, 1] += d_power * dx * dy
                        d_conic[m, 2] += d_power * 0.5 * dy * dy
                        d_mean2d[m, 0] += d_alpha * alpha * (conics[m, 0] * dx + conics[m, 1] * dy)
                        d_mean2d[m, 1] += d_alpha * alpha * (conics[m, 1] * dx + conics[m, 2] * dy)
                    s_r += colors[m, 0] * w
                    s_g += colors[m, 1] * w
                    s_b += colors[m, 2] * w
                    s_z += z * w
                    s_w += w
                    s_wg += w * g_pair
