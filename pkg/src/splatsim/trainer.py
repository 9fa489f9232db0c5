"""Optimization loop: Adam over per-attribute parameter groups, periodic
densify/prune, one real view plus sampled virtual views per iteration
accumulated into a single step. Deterministic for a fixed seed."""

import time
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.spatial import cKDTree

from .losses import LossWeights, total_loss, virtual_loss
from .metrics import depth_rmse, psnr, ssim
from .rasterizer import render, render_backward
from .scene import GaussianCloud
from .sh import rgb_to_dc
from .virtual_camera import ConfigurationError, sample_virtual


class TrainingFault(RuntimeError):
    """Non-finite loss or parameters; carries the failing iteration."""

    def __init__(self, message, iteration, diagnostics=None):
        super().__init__(message)
        self.iteration = iteration
        self.diagnostics = diagnostics or {}


@dataclass
class TrainConfig:
    iterations: int = 3000
    seed: int = 0
    sh_degree: int = 0               # active band cap (frequency regularization)
    sh_storage_degree: int = None    # coefficient storage; defaults to sh_degree
    virtual_per_iter: int = 1
    background: tuple = (0.0, 0.0, 0.0)
    weights: LossWeights = field(default_factory=LossWeights)
    lr_position: float = 1.6e-4
    lr_position_final: float = 1.6e-6
    lr_sh: float = 2.5e-3
    lr_opacity: float = 5e-2
    lr_scale: float = 5e-3
    lr_rotation: float = 1e-3
    densify_from: int = 100
    densify_until: int = 2000
    densify_interval: int = 100
    densify_grad_threshold: float = 2e-4
    percent_dense: float = 0.01
    prune_opacity: float = 5e-3
    split_factor: float = 1.6
    init_opacity: float = 0.1
    init_stride: int = 8             # depth back-projection pixel stride
    max_init_points: int = 100_000
    raster_sigma: float = 5.0    # training-time splat extent; plenty below lr noise
    log_every: int = 1

    def storage_degree(self):
        return self.sh_degree if self.sh_storage_degree is None else self.sh_storage_degree


@dataclass
class TrainReport:
    rows: list
    wall_time_s: float
    seed: int
    final_gaussians: int
    metrics: dict

    def losses(self):
        return [r["loss"] for r in self.rows]

    def to_dict(self):
        return asdict(self)


class Params:
    """Raw optimizer state: positions, raw quaternions, log scales, opacity
    logits, sh coefficients."""

    KEYS = ("positions", "rotations", "log_scales", "opacity_logits", "sh")

    def __init__(self, positions, rotations, log_scales, opacity_logits, sh):
        self.positions = positions
        self.rotations = rotations
        self.log_scales = log_scales
        self.opacity_logits = opacity_logits
        self.sh = sh

    def __len__(self):
        return self.positions.shape[0]

    def cloud(self):
        return GaussianCloud(
            positions=self.positions,
            rotations=self.rotations,
            scales=np.exp(self.log_scales),
            opacities=1.0 / (1.0 + np.exp(-self.opacity_logits)),
            sh=self.sh,
        )


class Adam:
    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-15):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(getattr(params, k)) for k in Params.KEYS}
        self.v = {k: np.zeros_like(getattr(params, k)) for k in Params.KEYS}

    def step(self, params, grads, lrs):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for key in Params.KEYS:
            g = getattr(grads, key) if not isinstance(grads, dict) else grads[key]
            m = self.m[key]
            v = self.v[key]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            update = lrs[key] * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
            getattr(params, key)[...] -= update

    def resize(self, keep, extra):
        """Keep rows by mask, append zero rows for new gaussians."""
        for store in (self.m, self.v):
            for key in Params.KEYS:
                kept = store[key][keep]
                pad = np.zeros((extra,) + kept.shape[1:], dtype=kept.dtype)
                store[key] = np.concatenate([kept, pad], axis=0)


def grad_key_map(grads):
    return {
        "positions": grads.positions,
        "rotations": grads.rotations,
        "log_scales": grads.log_scales,
        "opacity_logits": grads.opacity_logits,
        "sh": grads.sh,
    }


def scene_scale(cameras):
    centers = np.stack([c.center for c in cameras])
    mid = centers.mean(axis=0)
    r = float(np.max(np.linalg.norm(centers - mid, axis=1)))
    return max(r * 1.1, 1e-3)


def _mean_neighbor_distance(points):
    n = points.shape[0]
    if n < 2:
        return np.full(n, 0.01)
    k = min(4, n)
    d, _ = cKDTree(points).query(points, k=k)
    return np.maximum(d[:, 1:].mean(axis=1), 1e-7)


def initialize(bundle, config):
    """Seed Gaussians from the bundle's point cloud, falling back to
    back-projected depth from the training views."""
    rng = np.random.default_rng(config.seed)
    if bundle.init_points is not None and len(bundle.init_points):
        pts = np.asarray(bundle.init_points, dtype=np.float64)
        cols = (
            np.asarray(bundle.init_colors, dtype=np.float64)
            if bundle.init_colors is not None
            else np.full_like(pts, 0.5)
        )
    else:
        pts_list, col_list = [], []
        for rec in bundle.views("train"):
            if rec.depth is None:
                continue
            h, w = rec.depth.values.shape
            stride = max(1, config.init_stride)
            vv, uu = np.mgrid[0:h:stride, 0:w:stride]
            d = rec.depth.values[vv, uu]
            ok = np.isfinite(d) & (d > 0)
            vv, uu, d = vv[ok], uu[ok], d[ok]
            cam = rec.camera
            x = (uu + 0.5 - cam.cx) / cam.fx * d
            y = (vv + 0.5 - cam.cy) / cam.fy * d
            p_cam = np.stack([x, y, d], axis=1)
            pts_list.append((p_cam - cam.tvec) @ cam.R)
            col_list.append(rec.image[vv, uu])
        if not pts_list:
            raise ConfigurationError("no init points and no depth to back-project")
        pts = np.concatenate(pts_list)
        cols = np.concatenate(col_list)
    if pts.shape[0] > config.max_init_points:
        pick = rng.choice(pts.shape[0], config.max_init_points, replace=False)
        pts, cols = pts[pick], cols[pick]

    n = pts.shape[0]
    k = (config.storage_degree() + 1) ** 2
    sh = np.zeros((n, 3, k))
    sh[:, :, 0] = rgb_to_dc(np.clip(cols, 0.0, 1.0))
    rot = np.zeros((n, 4))
    rot[:, 0] = 1.0
    dist = _mean_neighbor_distance(pts)
    logit = float(np.log(config.init_opacity / (1.0 - config.init_opacity)))
    return Params(
        positions=pts.copy(),
        rotations=rot,
        log_scales=np.log(dist)[:, None].repeat(3, axis=1),
        opacity_logits=np.full(n, logit),
        sh=sh,
    )


def params_from_cloud(cloud, config):
    """Warm-start parameters from an existing cloud."""
    k = (config.storage_degree() + 1) ** 2
    n = len(cloud)
    sh = np.zeros((n, 3, k))
    kc = min(k, cloud.sh.shape[2])
    sh[:, :, :kc] = cloud.sh[:, :, :kc]
    op = np.clip(cloud.opacities, 1e-6, 1.0 - 1e-6)
    return Params(
        positions=cloud.positions.copy(),
        rotations=cloud.rotations.copy(),
        log_scales=np.log(cloud.scales),
        opacity_logits=np.log(op / (1.0 - op)),
        sh=sh,
    )


def densify_and_prune(params, adam, avg_grad, extent, config, rng):
    """Clone small high-gradient gaussians, split large ones, prune
    transparent ones. Returns the new gaussian count."""
    n = len(params)
    scales = np.exp(params.log_scales)
    high = avg_grad >= config.densify_grad_threshold
    big = scales.max(axis=1) > config.percent_dense * extent
    clone = high & ~big
    split = high & big

    new = {key: [getattr(params, key)] for key in Params.KEYS}
    # clones: exact copies
    for key in Params.KEYS:
        new[key].append(getattr(params, key)[clone])
    # splits: two children sampled inside the parent, scaled down
    s_idx = np.flatnonzero(split)
    if s_idx.size:
        from .geometry import quat_to_rotmat

        R = quat_to_rotmat(params.rotations[s_idx])
        for _ in range(2):
            local = rng.normal(0.0, 1.0, (s_idx.size, 3)) * scales[s_idx]
            offs = np.einsum("nij,nj->ni", R, local)
            new["positions"].append(params.positions[s_idx] + offs)
            new["rotations"].append(params.rotations[s_idx])
            new["log_scales"].append(params.log_scales[s_idx] - np.log(config.split_factor))
            new["opacity_logits"].append(params.opacity_logits[s_idx])
            new["sh"].append(params.sh[s_idx])

    keep = ~split  # split parents are replaced by their children
    opacity = 1.0 / (1.0 + np.exp(-params.opacity_logits))
    prune = opacity < config.prune_opacity
    limit = n // 2  # never drop more than half the cloud in one event
    if prune.sum() > limit:
        candidates = np.flatnonzero(prune)
        order = candidates[np.argsort(opacity[candidates])]
        prune = np.zeros(n, dtype=bool)
        prune[order[:limit]] = True
    keep &= ~prune

    for key in Params.KEYS:
        parts = [new[key][0][keep]] + new[key][1:]
        setattr(params, key, np.concatenate(parts, axis=0))
    extra = sum(arr.shape[0] for arr in new["positions"][1:])
    adam.resize(keep, extra)
    return len(params)


def train(bundle, config=None, init_cloud=None):
    """Optimize a Gaussian cloud on the bundle's training views.

    Returns (cloud, TrainReport). The report's loss sequence is a pure
    function of the bundle and config, including the seed.
    """
    config = config or TrainConfig()
    bundle.validate()
    rng = np.random.default_rng(config.seed)
    train_recs = bundle.views("train")
    test_recs = bundle.views("test")
    if not train_recs:
        raise ConfigurationError("bundle has no training views")
    cameras = [r.camera for r in train_recs]
    extent = scene_scale(cameras)

    if init_cloud is not None:
        params = params_from_cloud(init_cloud, config)
    else:
        params = initialize(bundle, config)
    adam = Adam(params)
    vs_sum = np.zeros(len(params))
    vs_cnt = np.zeros(len(params))

    rows = []
    t0 = time.perf_counter()
    for it in range(1, config.iterations + 1):
        cloud = params.cloud()
        rec = train_recs[(it - 1) % len(train_recs)]
        out = render(cloud, rec.camera, background=config.background,
                     sh_degree=config.sh_degree, raster_sigma=config.raster_sigma)
        tl = total_loss(out, rec.image, rec.depth, config.weights)
        grads = render_backward(out, tl.grad_rgb, tl.grad_depth, tl.grad_distortion)
        # densification stats track only the supervised pass, the convention
        # the gradient threshold is calibrated for
        vs_iter = grads.viewspace.copy()
        virt_val = 0.0
        if config.virtual_per_iter > 0 and len(cameras) >= 2:
            for _ in range(config.virtual_per_iter):
                vv = sample_virtual(cameras, rng)
                vout = render(cloud, vv.camera, background=config.background,
                              sh_degree=config.sh_degree, raster_sigma=config.raster_sigma)
                vl = virtual_loss(vout, config.weights)
                virt_val += vl.value
                grads.add_(render_backward(vout, vl.grad_rgb, vl.grad_depth, vl.grad_distortion))

        value = tl.value + virt_val
        if not np.isfinite(value):
            raise TrainingFault(
                f"non-finite loss at iteration {it}", it,
                {"parts": tl.parts, "virtual": virt_val, "gaussians": len(params)},
            )

        frac = it / config.iterations
        lr_pos = config.lr_position * (config.lr_position_final / config.lr_position) ** frac
        lrs = {
            "positions": lr_pos * extent,
            "rotations": config.lr_rotation,
            "log_scales": config.lr_scale,
            "opacity_logits": config.lr_opacity,
            "sh": config.lr_sh,
        }
        adam.step(params, grads, lrs)
        norm = np.linalg.norm(params.rotations, axis=1, keepdims=True)
        params.rotations /= np.maximum(norm, 1e-12)

        seen = vs_iter > 0
        vs_sum[seen] += vs_iter[seen]
        vs_cnt[seen] += 1

        if (
            config.densify_from <= it <= config.densify_until
            and it % config.densify_interval == 0
        ):
            avg = vs_sum / np.maximum(vs_cnt, 1)
            densify_and_prune(params, adam, avg, extent, config, rng)
            vs_sum = np.zeros(len(params))
            vs_cnt = np.zeros(len(params))

        if it % config.log_every == 0 or it == config.iterations:
            rows.append(
                {
                    "iteration": it,
                    "loss": float(value),
                    "gs": float(tl.parts["gs"]),
                    "depth": float(tl.parts["depth"]),
                    "dist": float(tl.parts["dist"]),
                    "tv": float(tl.parts["tv"]),
                    "virtual": float(virt_val),
                    "gaussians": len(params),
                }
            )

    cloud = params.cloud().validate()
    metrics = evaluate(cloud, test_recs, config) if test_recs else {}
    report = TrainReport(
        rows=rows,
        wall_time_s=time.perf_counter() - t0,
        seed=config.seed,
        final_gaussians=len(cloud),
        metrics=metrics,
    )
    return cloud, report


def evaluate(cloud, records, config=None, background=(0.0, 0.0, 0.0)):
    """Image and depth metrics averaged over the given views."""
    config = config or TrainConfig()
    if not records:
        return {}
    ps, ss, dr = [], [], []
    for rec in records:
        out = render(cloud, rec.camera, background=background, sh_degree=config.sh_degree)
        img = np.clip(out.rgb, 0.0, 1.0)
        ps.append(psnr(img, rec.image))
        ss.append(ssim(img, rec.image))
        if rec.depth is not None:
            norm = out.depth / np.maximum(out.alpha, 1e-8)
            mask = rec.depth.mask & (out.alpha > 0.5)
            dr.append(depth_rmse(norm, rec.depth.values, mask))
    out = {"psnr": float(np.mean(ps)), "ssim": float(np.mean(ss)), "n_views": len(records)}
    if dr:
        out["depth_rmse"] = float(np.mean(dr))
    return out
