"""Training losses with analytic gradients w.r.t. the rendered images.

Every loss returns (value, gradient) where the gradient matches the shape of
the rendered input, so the results can be fed straight into the rasterizer's
backward pass.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .metrics import filter2d, ssim_components


@dataclass
class LossWeights:
    lambda_dssim: float = 0.2
    lambda_depth: float = 0.5
    lambda_dist: float = 100.0
    lambda_tv: float = 1.0
    depth_alignment: bool = False


@dataclass
class TotalLoss:
    value: float
    parts: dict
    grad_rgb: np.ndarray
    grad_depth: np.ndarray
    grad_distortion: np.ndarray


def _ssim_backward(comp, x, y, g_map):
    """dL/dx given dL/dS(p), using the adjoint of the windowed means."""
    s = comp["map"]
    b1b2 = comp["b1"] * comp["b2"]
    d_a2 = comp["a1"] / b1b2
    d_vx = -s / comp["b2"] * g_map
    d_vxy = 2.0 * d_a2 * g_map
    d_mx = (
        2.0 * comp["my"] * comp["a2"] / b1b2 * g_map
        - 2.0 * comp["mx"] * s / comp["b1"] * g_map
        - 2.0 * comp["mx"] * d_vx
        - comp["my"] * d_vxy
    )
    return filter2d(d_mx) + 2.0 * x * filter2d(d_vx) + y * filter2d(d_vxy)


def loss_gs(rendered, target, lambda_dssim=0.2):
    """(1 - l) L1 + l (1 - SSIM)/2 between rendered and target images."""
    rendered = np.asarray(rendered, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    npix = rendered.size
    diff = rendered - target
    l1 = float(np.abs(diff).sum() / npix)
    comp = ssim_components(rendered, target)
    s_mean = float(np.mean(comp["map"]))
    value = (1.0 - lambda_dssim) * l1 + lambda_dssim * (1.0 - s_mean) / 2.0
    g_map = np.full(rendered.shape, -lambda_dssim / (2.0 * npix))
    grad = (1.0 - lambda_dssim) * np.sign(diff) / npix
    grad += _ssim_backward(comp, rendered, target, g_map)
    return value, grad


def loss_depth(rendered_depth, target, align=False):
    """Masked mean absolute error against sensor depth.

    target is a DepthMap; its mask selects the valid pixels. With align on,
    a least-squares scale/shift is fitted first and treated as constant by
    the gradient. An empty mask warns and contributes nothing.
    """
    d = np.asarray(rendered_depth, dtype=np.float64)
    mask = target.mask
    grad = np.zeros_like(d)
    nv = int(mask.sum())
    if nv == 0:
        warnings.warn("depth loss: no valid pixels in target", stacklevel=2)
        return 0.0, grad
    r = d[mask]
    t = target.values[mask]
    scale, shift = 1.0, 0.0
    if align:
        A = np.stack([r, np.ones_like(r)], axis=1)
        (scale, shift), *_ = np.linalg.lstsq(A, t, rcond=None)
    res = scale * r + shift - t
    value = float(np.abs(res).mean())
    grad[mask] = scale * np.sign(res) / nv
    return value, grad


def loss_tv(depth):
    """Anisotropic total variation of a depth image, normalized by pixel count."""
    d = np.asarray(depth, dtype=np.float64)
    h, w = d.shape
    dx = d[:, 1:] - d[:, :-1]
    dy = d[1:, :] - d[:-1, :]
    value = float((np.abs(dx).sum() + np.abs(dy).sum()) / (h * w))
    grad = np.zeros_like(d)
    sx = np.sign(dx) / (h * w)
    sy = np.sign(dy) / (h * w)
    grad[:, 1:] += sx
    grad[:, :-1] -= sx
    grad[1:, :] += sy
    grad[:-1, :] -= sy
    return value, grad


def loss_distortion(distortion_map):
    """Mean of the per-pixel pairwise depth-spread term."""
    d = np.asarray(distortion_map, dtype=np.float64)
    return float(d.mean()), np.full_like(d, 1.0 / d.size)


def total_loss(output, target_image, target_depth=None, weights=None):
    """Full supervised objective for one rendered view."""
    weights = weights or LossWeights()
    gs, g_rgb = loss_gs(output.rgb, target_image, weights.lambda_dssim)
    parts = {"gs": gs}
    grad_depth = np.zeros_like(output.depth)
    if target_depth is not None:
        dval, dgrad = loss_depth(output.depth, target_depth, weights.depth_alignment)
        parts["depth"] = dval
        grad_depth += weights.lambda_depth * dgrad
    else:
        parts["depth"] = 0.0
    dist, dist_grad = loss_distortion(output.distortion)
    tv, tv_grad = loss_tv(output.depth)
    parts["dist"] = dist
    parts["tv"] = tv
    grad_depth += weights.lambda_tv * tv_grad
    value = (
        gs
        + weights.lambda_depth * parts["depth"]
        + weights.lambda_dist * dist
        + weights.lambda_tv * tv
    )
    return TotalLoss(
        value=value,
        parts=parts,
        grad_rgb=g_rgb,
        grad_depth=grad_depth,
        grad_distortion=weights.lambda_dist * dist_grad,
    )


def virtual_loss(output, weights=None):
    """Geometry-only objective for unsupervised virtual views: the distortion
    and depth-smoothness terms under the same weights as the real views."""
    weights = weights or LossWeights()
    dist, dist_grad = loss_distortion(output.distortion)
    tv, tv_grad = loss_tv(output.depth)
    value = weights.lambda_dist * dist + weights.lambda_tv * tv
    return TotalLoss(
        value=value,
        parts={"dist": dist, "tv": tv},
        grad_rgb=np.zeros_like(output.rgb),
        grad_depth=weights.lambda_tv * tv_grad,
        grad_distortion=weights.lambda_dist * dist_grad,
    )
