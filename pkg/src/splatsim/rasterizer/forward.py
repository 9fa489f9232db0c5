"""Tiled forward rasterization: project, depth-sort, bin to tiles, blend."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .projection import _project_arrays

TILE = 16


class UsageError(RuntimeError):
    """Forward/backward state mismatch or malformed gradient inputs."""


@dataclass
class RenderOutput:
    """Forward images plus the saved state the backward pass consumes.

    depth is unnormalized alpha-weighted camera z; distortion is the
    per-pixel pairwise depth-spread term.
    """

    rgb: np.ndarray
    depth: np.ndarray
    alpha: np.ndarray
    distortion: np.ndarray
    cloud: object = None
    camera: object = None
    background: Optional[np.ndarray] = None
    ctx: object = field(default=None, repr=False)
    tiles: object = field(default=None, repr=False)
    n_contrib: Optional[np.ndarray] = field(default=None, repr=False)
    final_t: Optional[np.ndarray] = field(default=None, repr=False)


@dataclass
class TileLists:
    offsets: np.ndarray
    ids: np.ndarray
    ntx: int
    nty: int


def _bin_tiles(ctx, width, height):
    ntx = (width + TILE - 1) // TILE
    nty = (height + TILE - 1) // TILE
    m = ctx.idx.size
    if m == 0:
        return TileLists(np.zeros(ntx * nty + 1, np.int64), np.zeros(0, np.int64), ntx, nty)
    mx, my = ctx.mean2d[:, 0], ctx.mean2d[:, 1]
    r = ctx.radius
    tx0 = np.clip(np.floor((mx - r) / TILE).astype(np.int64), 0, ntx - 1)
    tx1 = np.clip(np.floor((mx + r) / TILE).astype(np.int64), 0, ntx - 1)
    ty0 = np.clip(np.floor((my - r) / TILE).astype(np.int64), 0, nty - 1)
    ty1 = np.clip(np.floor((my + r) / TILE).astype(np.int64), 0, nty - 1)
    sx = tx1 - tx0 + 1
    sy = ty1 - ty0 + 1
    rep = sx * sy
    total = int(rep.sum())
    splat = np.repeat(np.arange(m, dtype=np.int64), rep)
    starts = np.concatenate([[0], np.cumsum(rep)[:-1]])
    local = np.arange(total, dtype=np.int64) - np.repeat(starts, rep)
    sx_r = np.repeat(sx, rep)
    dx = local % sx_r
    dy = local // sx_r
    tile = (np.repeat(ty0, rep) + dy) * ntx + np.repeat(tx0, rep) + dx
    order = np.lexsort((splat, tile))
    ids = splat[order]
    counts = np.bincount(tile, minlength=ntx * nty)
    offsets = np.zeros(ntx * nty + 1, np.int64)
    np.cumsum(counts, out=offsets[1:])
    return TileLists(offsets, ids, ntx, nty)


def render(cloud, camera, background=(0.0, 0.0, 0.0), sh_degree=None, z_near=0.01,
           raster_sigma=None):
    """Render a Gaussian cloud. sh_degree caps the SH bands actually used;
    None means everything the cloud stores. raster_sigma bounds the screen
    footprint considered per splat (in sigmas); the default keeps truncation
    error orders of magnitude below any tolerance in use."""
    from .projection import RASTER_SIGMA

    h, w = camera.height, camera.width
    rs = RASTER_SIGMA if raster_sigma is None else float(raster_sigma)
    d_active = cloud.sh_degree if sh_degree is None else min(sh_degree, cloud.sh_degree)
    ctx = _project_arrays(cloud, camera, d_active, z_near, rs)
    tiles = _bin_tiles(ctx, w, h)

    rgb = np.zeros((h, w, 3))
    depth = np.zeros((h, w))
    alpha = np.zeros((h, w))
    dist = np.zeros((h, w))
    n_contrib = np.zeros((h, w), np.int64)
    final_t = np.ones((h, w))
    if ctx.idx.size:
        kernels.forward_kernel(
            w, h, TILE, tiles.ntx, tiles.nty,
            tiles.offsets, tiles.ids,
            ctx.mean2d, ctx.conic, ctx.z, ctx.color, ctx.opacity,
            0.5 * rs * rs,
            rgb, depth, alpha, dist, n_contrib, final_t,
        )
    bg = np.asarray(background, dtype=np.float64)
    rgb += (1.0 - alpha)[:, :, None] * bg
    return RenderOutput(
        rgb=rgb, depth=depth, alpha=alpha, distortion=dist,
        cloud=cloud, camera=camera, background=bg,
        ctx=ctx, tiles=tiles, n_contrib=n_contrib, final_t=final_t,
    )
