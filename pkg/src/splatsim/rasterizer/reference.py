"""Brute-force reference renderer.

Deliberately naive: per-splat whole-image blending with an explicit 2x2
matrix inverse, and the distortion map via the full pairwise sum instead of
running moments. Shares only the visibility semantics (near plane, 3-sigma
cull, alpha clamp, transmittance cutoff) with the tiled path; everything else
is an independent computation so the two can cross-check each other.
"""

import numpy as np

from ..sh import eval_colors
from .forward import RenderOutput
from .projection import CULL_SIGMA, LOWPASS, T_EPS


def render_reference(cloud, camera, background=(0.0, 0.0, 0.0), sh_degree=None, z_near=0.01):
    h, w = camera.height, camera.width
    d_active = cloud.sh_degree if sh_degree is None else min(sh_degree, cloud.sh_degree)
    R = camera.R
    n = len(cloud)

    dirs = cloud.positions - camera.center
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    colors, _, _ = eval_colors(cloud.sh, d_active, dirs)

    sigma_world = cloud.world_covariances()

    splats = []
    for i in range(n):
        p = R @ cloud.positions[i] + camera.tvec
        if p[2] <= z_near:
            continue
        zi = p[2]
        J = np.array(
            [
                [camera.fx / zi, 0.0, -camera.fx * p[0] / zi**2],
                [0.0, camera.fy / zi, -camera.fy * p[1] / zi**2],
            ]
        )
        cov = J @ (R @ sigma_world[i] @ R.T) @ J.T + LOWPASS * np.eye(2)
        mean = np.array(
            [camera.fx * p[0] / zi + camera.cx, camera.fy * p[1] / zi + camera.cy]
        )
        r = CULL_SIGMA * np.sqrt(np.linalg.eigvalsh(cov)[-1])
        if mean[0] + r <= 0 or mean[0] - r >= w or mean[1] + r <= 0 or mean[1] - r >= h:
            continue
        splats.append((zi, i, mean, cov))

    splats.sort(key=lambda t: t[0])  # python sort is stable; ties keep index order

    px = np.arange(w) + 0.5
    py = np.arange(h) + 0.5
    gx, gy = np.meshgrid(px, py)

    trans = np.ones((h, w))
    rgb = np.zeros((h, w, 3))
    depth = np.zeros((h, w))
    acc = np.zeros((h, w))
    weights = []
    zs = []
    for zi, i, mean, cov in splats:
        inv = np.linalg.inv(cov)
        dx = gx - mean[0]
        dy = gy - mean[1]
        md = inv[0, 0] * dx * dx + 2.0 * inv[0, 1] * dx * dy + inv[1, 1] * dy * dy
        aim = np.minimum(0.99, cloud.opacities[i] * np.exp(-0.5 * md))
        active = trans >= T_EPS
        wgt = np.where(active, aim * trans, 0.0)
        rgb += wgt[:, :, None] * colors[i]
        depth += zi * wgt
        acc += wgt
        trans = np.where(active, trans * (1.0 - aim), trans)
        weights.append(wgt.ravel())
        zs.append(zi)

    bg = np.asarray(background, dtype=np.float64)
    rgb += (1.0 - acc)[:, :, None] * bg

    if weights:
        wm = np.asarray(weights)
        zv = np.asarray(zs)
        absd = np.abs(zv[:, None] - zv[None, :])
        dist = 0.5 * np.einsum("kp,kp->p", wm, absd @ wm).reshape(h, w)
    else:
        dist = np.zeros((h, w))

    return RenderOutput(
        rgb=rgb, depth=depth, alpha=acc, distortion=dist,
        cloud=cloud, camera=camera, background=bg,
    )
