"""splatsim: sparse-view Gaussian-splat reconstruction with depth and
virtual-view regularization, plus interactive sparse-node MPM deformation."""

from .scene import (
    Camera,
    DeformedGaussians,
    DepthMap,
    GaussianCloud,
    GaussianPrimitive,
    SceneBundle,
    ValidationError,
    ViewRecord,
    covariance_of,
)
from .rasterizer import render, render_backward, render_reference

__all__ = [
    "Camera",
    "DeformedGaussians",
    "DepthMap",
    "GaussianCloud",
    "GaussianPrimitive",
    "SceneBundle",
    "ValidationError",
    "ViewRecord",
    "covariance_of",
    "render",
    "render_backward",
    "render_reference",
]

__version__ = "0.1.0"
