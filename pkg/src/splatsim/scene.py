"""Core scene types: Gaussian primitives, clouds, cameras, depth maps, bundles."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import build_covariances, quat_to_rotmat


class ValidationError(ValueError):
    """Raised when a scene object violates a structural invariant."""


@dataclass
class GaussianPrimitive:
    """One anisotropic Gaussian: position, unit quaternion (w,x,y,z),
    per-axis scale (std dev), opacity in [0,1], SH coefficients (3, (d+1)^2)."""

    position: np.ndarray
    rotation: np.ndarray
    scale: np.ndarray
    opacity: float
    sh: np.ndarray


def covariance_of(primitive):
    """World-space covariance R diag(s)^2 R^T of a single primitive."""
    return build_covariances(primitive.rotation, primitive.scale)


@dataclass
class GaussianCloud:
    """Column-wise storage for N Gaussians.

    positions (N,3), rotations (N,4) quaternions (w,x,y,z), scales (N,3)
    positive std devs, opacities (N,) in [0,1], sh (N,3,(d+1)^2).
    """

    positions: np.ndarray
    rotations: np.ndarray
    scales: np.ndarray
    opacities: np.ndarray
    sh: np.ndarray

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64)
        self.rotations = np.ascontiguousarray(self.rotations, dtype=np.float64)
        self.scales = np.ascontiguousarray(self.scales, dtype=np.float64)
        self.opacities = np.ascontiguousarray(self.opacities, dtype=np.float64)
        self.sh = np.ascontiguousarray(self.sh, dtype=np.float64)

    def __len__(self):
        return self.positions.shape[0]

    @property
    def sh_degree(self):
        k = self.sh.shape[2]
        d = int(round(np.sqrt(k))) - 1
        if (d + 1) ** 2 != k:
            raise ValidationError(f"sh coefficient count {k} is not a square")
        return d

    def validate(self):
        n = len(self)
        shapes = {
            "positions": (self.positions, (n, 3)),
            "rotations": (self.rotations, (n, 4)),
            "scales": (self.scales, (n, 3)),
            "opacities": (self.opacities, (n,)),
        }
        for name, (arr, want) in shapes.items():
            if arr.shape != want:
                raise ValidationError(f"{name} has shape {arr.shape}, expected {want}")
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} contains non-finite values")
        if self.sh.ndim != 3 or self.sh.shape[:2] != (n, 3):
            raise ValidationError(f"sh has shape {self.sh.shape}, expected ({n}, 3, k)")
        if not np.all(np.isfinite(self.sh)):
            raise ValidationError("sh contains non-finite values")
        self.sh_degree
        if np.any(self.scales <= 0):
            raise ValidationError("scales must be strictly positive")
        if np.any((self.opacities < 0) | (self.opacities > 1)):
            raise ValidationError("opacities must lie in [0, 1]")
        norms = np.linalg.norm(self.rotations, axis=1)
        if np.any(norms == 0):
            raise ValidationError("rotations contain a zero quaternion")
        return self

    def primitive(self, i):
        return GaussianPrimitive(
            position=self.positions[i],
            rotation=self.rotations[i],
            scale=self.scales[i],
            opacity=float(self.opacities[i]),
            sh=self.sh[i],
        )

    def world_covariances(self):
        return build_covariances(self.rotations, self.scales)

    def copy(self):
        return GaussianCloud(
            self.positions.copy(),
            self.rotations.copy(),
            self.scales.copy(),
            self.opacities.copy(),
            self.sh.copy(),
        )


@dataclass
class DeformedGaussians:
    """A cloud whose covariances are stored directly (post-deformation they
    are generally not expressible as R diag(s)^2 R^T of the stored basis)."""

    positions: np.ndarray
    covariances: np.ndarray
    opacities: np.ndarray
    sh: np.ndarray

    def __len__(self):
        return self.positions.shape[0]

    @property
    def sh_degree(self):
        return int(round(np.sqrt(self.sh.shape[2]))) - 1

    def world_covariances(self):
        return self.covariances


@dataclass
class Camera:
    """Pinhole camera with COLMAP pose convention.

    qvec/tvec map world to camera: x_cam = R x_world + t, camera looks down
    +z with x right and y down in the image.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    qvec: np.ndarray
    tvec: np.ndarray

    def __post_init__(self):
        self.qvec = np.asarray(self.qvec, dtype=np.float64)
        self.tvec = np.asarray(self.tvec, dtype=np.float64)
        if self.qvec.shape != (4,) or self.tvec.shape != (3,):
            raise ValidationError("camera pose must be qvec (4,), tvec (3,)")
        if self.width <= 0 or self.height <= 0:
            raise ValidationError("image dimensions must be positive")
        if self.fx <= 0 or self.fy <= 0:
            raise ValidationError("focal lengths must be positive")

    @property
    def R(self):
        return quat_to_rotmat(self.qvec)

    @property
    def center(self):
        return -self.R.T @ self.tvec

    def world_to_cam(self, points):
        return np.asarray(points, dtype=np.float64) @ self.R.T + self.tvec

    def project(self, points):
        """Pixel coordinates of world points; callers must filter z <= 0."""
        p = self.world_to_cam(points)
        z = p[..., 2]
        return np.stack(
            [self.fx * p[..., 0] / z + self.cx, self.fy * p[..., 1] / z + self.cy], axis=-1
        )


@dataclass
class DepthMap:
    """Metric depth in camera-space z; nonpositive or nonfinite values are
    treated as missing."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValidationError("depth map must be 2-D")

    @property
    def mask(self):
        return np.isfinite(self.values) & (self.values > 0)


@dataclass
class ViewRecord:
    camera: Camera
    image: np.ndarray
    depth: Optional[DepthMap] = None
    split: str = "train"
    name: str = ""


@dataclass
class SceneBundle:
    """A posed multi-view capture plus an optional seed point cloud."""

    records: list
    init_points: Optional[np.ndarray] = None
    init_colors: Optional[np.ndarray] = None

    def validate(self):
        if len(self.records) < 2:
            raise ValidationError("a scene bundle needs at least two views")
        for rec in self.records:
            h, w = rec.image.shape[:2]
            if (w, h) != (rec.camera.width, rec.camera.height):
                raise ValidationError(
                    f"image {rec.image.shape} does not match camera "
                    f"{rec.camera.width}x{rec.camera.height}"
                )
            if rec.depth is not None and rec.depth.values.shape != (h, w):
                raise ValidationError("depth map shape does not match image")
        return self

    def views(self, split=None):
        if split is None:
            return list(self.records)
        return [r for r in self.records if r.split == split]
