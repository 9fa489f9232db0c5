"""EWA projection of 3-D Gaussians to screen space.

Pixel (i, j) has its center at (j + 0.5, i + 0.5). A splat survives when its
center is in front of the near plane and its 3-sigma screen box overlaps the
image; the surviving set is the rasterization semantics, not an optimization,
so the brute-force reference applies the same rule.
"""

from dataclasses import dataclass

import numpy as np

from ..sh import eval_colors

LOWPASS = 0.3          # px^2 added to the screen covariance diagonal
CULL_SIGMA = 3.0       # semantic visibility extent
RASTER_SIGMA = 6.5     # tile-binning extent; exp(-21) is below any tolerance in use
T_EPS = 1e-4           # transmittance cutoff


@dataclass
class Splat2D:
    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: float
    color: np.ndarray
    opacity: float
    radius: float


@dataclass
class ProjectionContext:
    """Everything the blend kernels and the backward chain need, for the
    surviving splats in front-to-back order."""

    idx: np.ndarray          # (M,) rows into the source cloud
    p_cam: np.ndarray        # (M,3)
    mean2d: np.ndarray       # (M,2)
    cov2d: np.ndarray        # (M,3) upper-triangular (a, b, c)
    conic: np.ndarray        # (M,3) inverse, same layout
    z: np.ndarray            # (M,)
    color: np.ndarray        # (M,3)
    opacity: np.ndarray      # (M,)
    radius: np.ndarray       # (M,) raster extent in px
    basis: np.ndarray        # (M,K) sh basis at view directions
    clamped: np.ndarray      # (M,3) color channels pinned at zero
    dirs: np.ndarray         # (M,3) unit view directions
    view_norm: np.ndarray    # (M,)
    d_active: int
    z_near: float
    raster_sigma: float


def _project_arrays(cloud, camera, d_active, z_near, raster_sigma=RASTER_SIGMA):
    """Project every Gaussian; returns a front-to-back ProjectionContext."""
    R = camera.R
    p_cam = cloud.positions @ R.T + camera.tvec
    z = p_cam[:, 2]
    in_front = z > z_near

    sigma_world = cloud.world_covariances()
    sigma_cam = (R @ sigma_world) @ R.T

    x, y, zz = p_cam[:, 0], p_cam[:, 1], np.where(in_front, z, 1.0)
    fx, fy = camera.fx, camera.fy
    J = np.zeros((len(cloud), 2, 3))
    J[:, 0, 0] = fx / zz
    J[:, 0, 2] = -fx * x / zz**2
    J[:, 1, 1] = fy / zz
    J[:, 1, 2] = -fy * y / zz**2
    cov2d_m = (J @ sigma_cam) @ np.swapaxes(J, 1, 2)
    a = cov2d_m[:, 0, 0] + LOWPASS
    b = cov2d_m[:, 0, 1]
    c = cov2d_m[:, 1, 1] + LOWPASS

    lmax = 0.5 * (a + c) + np.sqrt(np.maximum(0.25 * (a - c) ** 2 + b * b, 0.0))
    sigma_px = np.sqrt(np.maximum(lmax, 0.0))
    mean2d = np.stack([fx * x / zz + camera.cx, fy * y / zz + camera.cy], axis=1)

    r_cull = CULL_SIGMA * sigma_px
    visible = (
        in_front
        & (mean2d[:, 0] + r_cull > 0)
        & (mean2d[:, 0] - r_cull < camera.width)
        & (mean2d[:, 1] + r_cull > 0)
        & (mean2d[:, 1] - r_cull < camera.height)
    )
    keep = np.flatnonzero(visible)
    order = keep[np.argsort(z[keep], kind="stable")]

    det = a * c - b * b
    conic = np.stack([c / det, -b / det, a / det], axis=1)

    diff = cloud.positions - camera.center
    vnorm = np.linalg.norm(diff, axis=1)
    safe = np.where(vnorm > 0, vnorm, 1.0)
    dirs = diff / safe[:, None]
    color, basis, clamped = eval_colors(cloud.sh, d_active, dirs)

    return ProjectionContext(
        idx=order,
        p_cam=p_cam[order],
        mean2d=mean2d[order],
        cov2d=np.stack([a, b, c], axis=1)[order],
        conic=conic[order],
        z=z[order],
        color=color[order],
        opacity=cloud.opacities[order],
        radius=(raster_sigma * sigma_px)[order],
        basis=basis[order],
        clamped=clamped[order],
        dirs=dirs[order],
        view_norm=vnorm[order],
        d_active=d_active,
        z_near=z_near,
        raster_sigma=raster_sigma,
    )


def project(primitive, camera, z_near=0.01):
    """Screen-space footprint of a single primitive, or None when culled."""
    from ..scene import GaussianCloud

    cloud = GaussianCloud(
        positions=primitive.position[None],
        rotations=primitive.rotation[None],
        scales=primitive.scale[None],
        opacities=np.asarray([primitive.opacity]),
        sh=primitive.sh[None],
    )
    ctx = _project_arrays(cloud, camera, cloud.sh_degree, z_near)
    if ctx.idx.size == 0:
        return None
    a, b, c = ctx.cov2d[0]
    return Splat2D(
        mean2d=ctx.mean2d[0],
        cov2d=np.array([[a, b], [b, c]]),
        depth=float(ctx.z[0]),
        color=ctx.color[0],
        opacity=float(ctx.opacity[0]),
        radius=float(ctx.radius[0]),
    )
