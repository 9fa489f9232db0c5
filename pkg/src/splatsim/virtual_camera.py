"""Virtual cameras interpolated between pairs of training views.

Interpolation happens on camera-to-world poses: slerp on orientation, lerp on
camera centers, then conversion back to the world-to-camera convention the
rest of the pipeline uses. Intrinsics come from the first view of the pair.
"""

from dataclasses import dataclass

import numpy as np

from .geometry import quat_conjugate, quat_normalize, quat_to_rotmat, slerp
from .scene import Camera


class ConfigurationError(ValueError):
    """Virtual view sampling asked of an unusable view set."""


@dataclass
class VirtualView:
    camera: Camera
    alpha: float
    parents: tuple


def make_virtual(cam_a, cam_b, alpha):
    """Pose-interpolated camera between two views at fraction alpha."""
    if not 0.0 <= alpha <= 1.0:
        raise ConfigurationError(f"alpha {alpha} outside [0, 1]")
    q_c2w = slerp(quat_conjugate(cam_a.qvec), quat_conjugate(cam_b.qvec), alpha)
    center = (1.0 - alpha) * cam_a.center + alpha * cam_b.center
    qvec = quat_normalize(quat_conjugate(q_c2w))
    tvec = -quat_to_rotmat(qvec) @ center
    cam = Camera(
        fx=cam_a.fx, fy=cam_a.fy, cx=cam_a.cx, cy=cam_a.cy,
        width=cam_a.width, height=cam_a.height, qvec=qvec, tvec=tvec,
    )
    return VirtualView(camera=cam, alpha=float(alpha), parents=(-1, -1))


def sample_virtual(cameras, rng, alpha_range=(0.1, 0.9)):
    """Pick a random training view, pair it with its nearest neighbor by
    camera center, and interpolate at a uniform random fraction."""
    if len(cameras) < 2:
        raise ConfigurationError("virtual view sampling needs at least two views")
    i = int(rng.integers(len(cameras)))
    centers = np.stack([c.center for c in cameras])
    d = np.linalg.norm(centers - centers[i], axis=1)
    d[i] = np.inf
    j = int(np.argmin(d))
    alpha = float(rng.uniform(*alpha_range))
    view = make_virtual(cameras[i], cameras[j], alpha)
    view.parents = (i, j)
    return view
