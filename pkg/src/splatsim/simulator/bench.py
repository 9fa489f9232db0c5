"""Sparse-control vs dense-baseline speed comparison."""

import time

import numpy as np

from ..metrics import psnr
from ..rasterizer import render
from ..scene import DeformedGaussians
from .deform import deform_cloud
from .mpm import (
    MaterialParams,
    MpmGrid,
    dense_particles_from_cloud,
    mpm_substep,
    nodes_from_cloud,
)
from .sampling import bind_gaussians


def deform_dense(cloud, particles):
    """Dense mode: every Gaussian is its own particle, so positions come
    straight from the state and covariances from each particle's F."""
    Ft = np.swapaxes(particles.F, 1, 2)
    cov = particles.F @ cloud.world_covariances() @ Ft
    return DeformedGaussians(
        positions=particles.positions.copy(),
        covariances=cov,
        opacities=cloud.opacities.copy(),
        sh=cloud.sh.copy(),
    )


def _default_force(cloud):
    from .mpm import ForceEvent

    lo = cloud.positions.min(axis=0)
    hi = cloud.positions.max(axis=0)
    extent = float(np.max(hi - lo))
    top = 0.5 * (lo + hi)
    top[2] = hi[2]
    return ForceEvent(position=top, direction=[0.0, 0.0, -1.0],
                      magnitude=0.5, radius=0.1 * extent)


def run_benchmark(cloud, n_nodes=512, frames=3, params=None, seed=0,
                  camera=None, force="default", anchor_margin=0.1):
    """Time sparse and dense modes over identical scripted frames.

    Returns a JSON-ready dict with per-frame wall times (substeps + carry of
    the Gaussians + render), FPS for both modes, the speed ratio, and the
    PSNR between the two modes' final renders.
    """
    params = params or MaterialParams()
    if force == "default":
        force = _default_force(cloud)
    if camera is None:
        from ..session import default_camera

        camera = default_camera(cloud)

    report = {
        "gaussians": int(len(cloud.positions)),
        "nodes": int(n_nodes),
        "frames": int(frames),
        "substeps": int(params.substeps),
        "dt": float(params.dt),
    }
    finals = {}
    for mode in ("sparse", "dense"):
        if mode == "sparse":
            state, _ = nodes_from_cloud(cloud, n_nodes, seed=seed, params=params,
                                        anchor_margin=anchor_margin)
            binding = bind_gaussians(cloud.positions, state.rest_positions, k=4)
            carry = lambda: deform_cloud(cloud, binding, state)
        else:
            state = dense_particles_from_cloud(cloud, params=params,
                                               anchor_margin=anchor_margin)
            carry = lambda: deform_dense(cloud, state)
        grid = MpmGrid.around(cloud.positions, params.grid_resolution)

        # one untimed warmup frame so page faults and caches settle
        for _ in range(params.substeps):
            mpm_substep(state, grid, params, force=force)
        carry()

        per_frame = []
        deformed = None
        for _ in range(frames):
            t0 = time.perf_counter()
            for _ in range(params.substeps):
                mpm_substep(state, grid, params, force=force)
            deformed = carry()
            out = render(deformed, camera)
            per_frame.append(time.perf_counter() - t0)
        finals[mode] = out.rgb
        mean_s = float(np.mean(per_frame))
        report[mode] = {
            "frame_ms": round(mean_s * 1000.0, 3),
            "fps": round(1.0 / mean_s, 3),
            "per_frame_ms": [round(v * 1000.0, 3) for v in per_frame],
        }
    report["speedup"] = round(
        report["dense"]["frame_ms"] / report["sparse"]["frame_ms"], 3
    )
    report["psnr_sparse_vs_dense"] = round(
        float(psnr(finals["sparse"], finals["dense"])), 3
    )
    return report
