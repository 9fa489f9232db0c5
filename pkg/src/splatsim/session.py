"""Interactive simulation sessions: a rest cloud plus control nodes, advanced
frame by frame, rendered, and encoded for streaming."""

import io as _io
import itertools
import struct
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from PIL import Image

from .rasterizer import render
from .scene import Camera
from .sh import dc_to_rgb
from .simulator.deform import deform_cloud
from .simulator.mpm import (
    ForceEvent,
    MaterialParams,
    MpmGrid,
    SimulationFault,
    mpm_substep,
    nodes_from_cloud,
)
from .simulator.sampling import bind_gaussians
from .synthetic import look_at_camera

_ids = itertools.count(1)

ENCODINGS = ("png", "jpeg", "positions")


class SessionStateError(RuntimeError):
    pass


def default_camera(cloud, width=256, height=256):
    """Frame the whole cloud from above its +z face, world +z up."""
    lo = cloud.positions.min(axis=0)
    hi = cloud.positions.max(axis=0)
    center = 0.5 * (lo + hi)
    extent = max(float(np.max(hi - lo)), 1e-3)
    eye = center + np.array([0.25, 0.25, 1.0]) * 1.8 * extent
    focal = 1.1 * width / 2.0 / np.tan(np.arctan2(0.6 * extent, 1.8 * extent))
    focal = min(focal, 2.5 * width)
    return look_at_camera(eye, center, (width, height), focal=focal)


def encode_rgb(rgb, encoding):
    img = Image.fromarray(
        np.clip(rgb * 255.0 + 0.5, 0, 255).astype(np.uint8), mode="RGB"
    )
    buf = _io.BytesIO()
    if encoding == "png":
        img.save(buf, format="PNG")
    else:
        img.save(buf, format="JPEG", quality=85)
    return buf.getvalue()


def encode_positions(deformed):
    """Per gaussian: 3 position + 6 covariance (xx,xy,xz,yy,yz,zz) + 3 rgb,
    little-endian float32, row per gaussian."""
    cov = deformed.world_covariances()
    tri = np.stack(
        [cov[:, 0, 0], cov[:, 0, 1], cov[:, 0, 2],
         cov[:, 1, 1], cov[:, 1, 2], cov[:, 2, 2]], axis=1
    )
    rgb = np.clip(dc_to_rgb(deformed.sh[:, :, 0]), 0.0, 1.0)
    out = np.concatenate([deformed.positions, tri, rgb], axis=1)
    return np.ascontiguousarray(out, dtype="<f4").tobytes()


def frame_blob(payload):
    """Length-prefixed binary frame body."""
    return struct.pack("<I", len(payload)) + payload


@dataclass
class SimSession:
    id: int
    cloud_name: str
    cloud: object
    nodes: object
    binding: object
    grid: MpmGrid
    params: MaterialParams
    camera: Camera
    encoding: str = "png"
    background: tuple = (0.0, 0.0, 0.0)
    active_force: Optional[ForceEvent] = None
    last_force: Optional[ForceEvent] = None
    frame: int = 0
    running: bool = True
    last_render: object = field(default=None, repr=False)
    fault: Optional[dict] = None

    @staticmethod
    def create(cloud, cloud_name="cloud", n_nodes=512, params=None, seed=0,
               anchor_margin=0.1, anchor_axes=None, bind_k=4, camera=None,
               encoding="png"):
        if n_nodes <= 0:
            raise ValueError("node count must be positive")
        if n_nodes > len(cloud.positions):
            raise ValueError(
                f"node count {n_nodes} exceeds gaussian count {len(cloud.positions)}"
            )
        params = params or MaterialParams()
        nodes, _ = nodes_from_cloud(
            cloud, n_nodes, seed=seed, params=params,
            anchor_margin=anchor_margin, anchor_axes=anchor_axes,
        )
        binding = bind_gaussians(cloud.positions, nodes.rest_positions, k=bind_k)
        grid = MpmGrid.around(cloud.positions, params.grid_resolution)
        return SimSession(
            id=next(_ids),
            cloud_name=cloud_name,
            cloud=cloud,
            nodes=nodes,
            binding=binding,
            grid=grid,
            params=params,
            camera=camera or default_camera(cloud),
            encoding=encoding,
        )

    # -- commands -----------------------------------------------------------

    def apply_force(self, position, direction, magnitude, radius):
        direction = np.asarray(direction, dtype=np.float64)
        norm = float(np.linalg.norm(direction))
        if norm <= 0:
            raise ValueError("force direction must be nonzero")
        warned = abs(norm - 1.0) > 1e-6
        event = ForceEvent(
            position=position, direction=direction / norm,
            magnitude=float(magnitude), radius=float(radius),
        )
        self.active_force = event
        self.last_force = event
        return warned

    def release_force(self):
        self.active_force = None

    def set_camera(self, qvec, tvec, width=None, height=None, focal=None):
        cam = self.camera
        w = int(width) if width else cam.width
        h = int(height) if height else cam.height
        fx = float(focal) if focal else cam.fx * (w / cam.width)
        fy = float(focal) if focal else cam.fy * (h / cam.height)
        self.camera = Camera(
            fx=fx, fy=fy, cx=w / 2.0, cy=h / 2.0, width=w, height=h,
            qvec=np.asarray(qvec, dtype=np.float64),
            tvec=np.asarray(tvec, dtype=np.float64),
        )

    def set_params(self, **kwargs):
        fields = set(MaterialParams.__dataclass_fields__)
        unknown = set(kwargs) - fields - {"encoding", "background"}
        if unknown:
            raise ValueError(f"unknown parameters: {sorted(unknown)}")
        enc = kwargs.pop("encoding", None)
        if enc is not None:
            if enc not in ENCODINGS:
                raise ValueError(f"unknown encoding {enc!r}")
            self.encoding = enc
        bg = kwargs.pop("background", None)
        if bg is not None:
            self.background = tuple(float(v) for v in bg)
        if kwargs:
            if "gravity" in kwargs:
                kwargs["gravity"] = tuple(float(v) for v in kwargs["gravity"])
            self.params = self.params.replace(**kwargs)
            if "grid_resolution" in kwargs:
                self.grid = MpmGrid.around(
                    self.cloud.positions, self.params.grid_resolution
                )

    def reset(self):
        self.nodes.reset()
        self.active_force = None
        self.last_force = None
        self.frame = 0
        self.running = True
        self.fault = None
        self.last_render = None

    # -- stepping -----------------------------------------------------------

    def displacement_stats(self):
        disp = np.linalg.norm(self.nodes.positions - self.nodes.rest_positions, axis=1)
        stats = {"disp_max": float(disp.max())}
        if self.last_force is not None:
            r = np.linalg.norm(
                self.nodes.rest_positions - self.last_force.position, axis=1
            )
            near = disp[r < self.last_force.radius]
            far = disp[r > 3.0 * self.last_force.radius]
            stats["disp_center"] = float(near.max()) if near.size else 0.0
            stats["disp_far"] = float(far.max()) if far.size else 0.0
        return stats

    def step_frame(self):
        """Advance one frame and render it. Returns (payload dict, raw bytes)."""
        if not self.running:
            raise SessionStateError("not running")
        t0 = time.perf_counter()
        try:
            for _ in range(self.params.substeps):
                mpm_substep(self.nodes, self.grid, self.params, force=self.active_force)
        except SimulationFault as fault:
            self.running = False
            self.fault = {"message": str(fault), **fault.diagnostics}
            raise
        deformed = deform_cloud(self.cloud, self.binding, self.nodes)
        t1 = time.perf_counter()
        out = render(deformed, self.camera, background=self.background)
        self.last_render = out
        t2 = time.perf_counter()
        if self.encoding == "positions":
            blob = encode_positions(deformed)
        else:
            blob = encode_rgb(out.rgb, self.encoding)
        self.frame += 1
        sim_ms = (t1 - t0) * 1000.0
        render_ms = (t2 - t1) * 1000.0
        stats = {
            "sim_ms": round(sim_ms, 3),
            "render_ms": round(render_ms, 3),
            "fps": round(1000.0 / max(sim_ms + render_ms, 1e-6), 2),
            "gaussians": len(self.cloud.positions),
            "nodes": len(self.nodes),
            **self.displacement_stats(),
        }
        payload = {
            "type": "frame",
            "seq": self.frame,
            "encoding": self.encoding,
            "width": self.camera.width,
            "height": self.camera.height,
            "stats": stats,
        }
        return payload, blob

    def query_depth(self, x, y):
        """World point under a pixel of the last rendered frame, if any."""
        if self.last_render is None:
            return {"type": "depth", "valid": False, "reason": "no frame rendered"}
        out = self.last_render
        h, w = out.alpha.shape
        xi, yi = int(x), int(y)
        if not (0 <= xi < w and 0 <= yi < h):
            return {"type": "depth", "valid": False, "reason": "out of bounds"}
        alpha = float(out.alpha[yi, xi])
        if alpha < 0.05:
            return {"type": "depth", "valid": False, "reason": "empty pixel"}
        z = float(out.depth[yi, xi]) / alpha
        cam = self.camera
        x_cam = np.array(
            [(x + 0.5 - cam.cx) / cam.fx * z, (y + 0.5 - cam.cy) / cam.fy * z, z]
        )
        world = cam.R.T @ (x_cam - cam.tvec)
        return {
            "type": "depth",
            "valid": True,
            "x": x, "y": y,
            "depth": z,
            "alpha": alpha,
            "point": [float(v) for v in world],
        }
