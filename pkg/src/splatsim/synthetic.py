"""Synthetic benchmark scenes: a bumpy textured surface patch observed by
cameras on a shallow arc, with ground-truth renders and noisy depth."""

from dataclasses import dataclass, field

import numpy as np

from .geometry import rotmat_to_quat
from .rasterizer import render
from .scene import Camera, DepthMap, GaussianCloud, SceneBundle, ViewRecord
from .sh import rgb_to_dc


@dataclass
class SyntheticSpec:
    extent: float = 1.0              # patch side length in meters
    grid: int = 40                   # gaussians per side
    bumps: int = 6
    bump_height: float = 0.12
    cameras: int = 8
    arc_radius: float = 1.6
    arc_span_deg: float = 40.0       # restricted angular movement
    elevation_deg: float = 55.0
    width: int = 128
    height: int = 128
    focal: float = 160.0
    depth_noise: float = 0.01        # relative sensor noise
    depth_dropout: float = 0.05      # fraction of invalid pixels
    seed: int = 0


def _height_field(spec, rng):
    centers = rng.uniform(-0.35, 0.35, (spec.bumps, 2)) * spec.extent
    sigmas = rng.uniform(0.08, 0.2, spec.bumps) * spec.extent
    amps = rng.uniform(0.3, 1.0, spec.bumps) * spec.bump_height
    signs = rng.choice([-1.0, 1.0], spec.bumps)

    def height(xy):
        z = np.zeros(xy.shape[0])
        for c, s, a, sg in zip(centers, sigmas, amps, signs):
            d2 = np.sum((xy - c) ** 2, axis=1)
            z += sg * a * np.exp(-0.5 * d2 / s**2)
        return z

    return height


def _texture(xy, extent, rng):
    """Smooth random color field: a few sinusoidal octaves per channel."""
    u = xy / extent
    out = np.zeros((xy.shape[0], 3))
    for ch in range(3):
        v = np.zeros(xy.shape[0])
        for octave in range(3):
            f = 2.0 ** (octave + 1)
            px, py = rng.uniform(0, 2 * np.pi, 2)
            wx, wy = rng.normal(0, f, 2)
            v += rng.uniform(0.3, 1.0) / (octave + 1) * np.sin(wx * u[:, 0] + py + np.sin(wy * u[:, 1] + px))
        out[:, ch] = v
    lo, hi = out.min(axis=0), out.max(axis=0)
    return 0.15 + 0.7 * (out - lo) / np.maximum(hi - lo, 1e-9)


def look_at_camera(center, target, spec_or_size, focal=None):
    """COLMAP-convention camera at `center` looking at `target`, world +z up."""
    if focal is None:
        w, h, focal = spec_or_size.width, spec_or_size.height, spec_or_size.focal
    else:
        w, h = spec_or_size
    fwd = np.asarray(target, dtype=np.float64) - center
    fwd = fwd / np.linalg.norm(fwd)
    up = np.array([0.0, 0.0, 1.0])
    right = np.cross(fwd, up)
    nr = np.linalg.norm(right)
    if nr < 1e-9:
        right = np.array([1.0, 0.0, 0.0])
    else:
        right = right / nr
    down = np.cross(fwd, right)
    R = np.stack([right, down, fwd])
    return Camera(
        fx=focal, fy=focal, cx=w / 2.0, cy=h / 2.0, width=w, height=h,
        qvec=rotmat_to_quat(R), tvec=-R @ np.asarray(center, dtype=np.float64),
    )


def ground_truth_cloud(spec, rng):
    n = spec.grid
    lin = (np.arange(n) + 0.5) / n - 0.5
    gx, gy = np.meshgrid(lin, lin)
    xy = np.stack([gx.ravel(), gy.ravel()], axis=1) * spec.extent
    xy += rng.uniform(-0.2, 0.2, xy.shape) * spec.extent / n
    height = _height_field(spec, rng)
    z = height(xy)
    positions = np.concatenate([xy, z[:, None]], axis=1)
    spacing = spec.extent / n
    scales = rng.uniform(0.6, 0.85, (xy.shape[0], 3)) * spacing
    scales[:, 2] *= 0.5  # flatter along the surface normal
    colors = _texture(xy, spec.extent, rng)
    sh = np.zeros((xy.shape[0], 3, 1))
    sh[:, :, 0] = rgb_to_dc(colors)
    rot = np.zeros((xy.shape[0], 4))
    rot[:, 0] = 1.0
    return GaussianCloud(
        positions=positions,
        rotations=rot,
        scales=scales,
        opacities=rng.uniform(0.85, 0.98, xy.shape[0]),
        sh=sh,
    )


def camera_ring(spec):
    phis = np.deg2rad(np.linspace(-spec.arc_span_deg / 2, spec.arc_span_deg / 2, spec.cameras))
    el = np.deg2rad(spec.elevation_deg)
    cams = []
    for phi in phis:
        c = spec.arc_radius * np.array(
            [np.cos(el) * np.sin(phi), -np.cos(el) * np.cos(phi), np.sin(el)]
        )
        cams.append(look_at_camera(c, np.zeros(3), spec))
    return cams


def generate(spec):
    """Ground-truth cloud plus a rendered SceneBundle with noisy depth."""
    rng = np.random.default_rng(spec.seed)
    cloud = ground_truth_cloud(spec, rng)
    cams = camera_ring(spec)
    records = []
    for i, cam in enumerate(cams):
        out = render(cloud, cam, background=(0.0, 0.0, 0.0))
        depth = out.depth.copy()
        seen = out.alpha > 0.5
        # sensor-style depth: alpha-normalized where the surface is seen
        depth[seen] = depth[seen] / out.alpha[seen]
        depth[~seen] = 0.0
        noise = 1.0 + spec.depth_noise * rng.normal(0, 1, depth.shape)
        depth = depth * noise
        depth[rng.random(depth.shape) < spec.depth_dropout] = 0.0
        records.append(
            ViewRecord(
                camera=cam,
                image=np.clip(out.rgb, 0.0, 1.0),
                depth=DepthMap(depth),
                split="train",
                name=f"view_{i:04d}",
            )
        )
    return cloud, SceneBundle(records=records).validate()


def assign_splits(bundle, train_views):
    """Mark a train/test split: 2 views means first and last; otherwise the
    given number evenly spaced. Everything else becomes test."""
    n = len(bundle.records)
    if train_views < 2 or train_views > n:
        raise ValueError(f"train_views {train_views} out of range [2, {n}]")
    if train_views == 2:
        chosen = {0, n - 1}
    else:
        chosen = set(np.round(np.linspace(0, n - 1, train_views)).astype(int).tolist())
    for i, rec in enumerate(bundle.records):
        rec.split = "train" if i in chosen else "test"
    return bundle
