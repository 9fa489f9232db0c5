import numpy as np
import pytest

from splatsim.scene import SceneBundle
from splatsim.sh import rgb_to_dc
from splatsim.synthetic import SyntheticSpec, generate
from splatsim.trainer import (
    Adam, Params, TrainConfig, TrainingFault, densify_and_prune, evaluate,
    initialize, params_from_cloud, scene_scale, train,
)
from splatsim.virtual_camera import ConfigurationError
from conftest import random_cloud


def bundle_with_points(tiny_scene, pts, cols=None):
    _, _, bundle = tiny_scene
    return SceneBundle(records=bundle.records, init_points=np.asarray(pts),
                       init_colors=None if cols is None else np.asarray(cols))


def test_initialize_single_point(tiny_scene):
    color = np.array([[0.2, 0.4, 0.8]])
    b = bundle_with_points(tiny_scene, [[0.0, 0.0, 0.0]], color)
    p = initialize(b, TrainConfig())
    assert len(p) == 1
    assert np.allclose(p.sh[0, :, 0], rgb_to_dc(color[0]), atol=1e-12)
    assert np.allclose(p.log_scales[0], np.log(0.01), atol=1e-12)
    want_logit = np.log(0.1 / 0.9)
    assert abs(p.opacity_logits[0] - want_logit) < 1e-12
    assert np.allclose(p.rotations[0], [1, 0, 0, 0])
    # missing colors default to mid gray
    p2 = initialize(bundle_with_points(tiny_scene, [[0.0, 0.0, 0.0]]), TrainConfig())
    assert np.allclose(p2.sh[0, :, 0], rgb_to_dc(np.array([0.5, 0.5, 0.5])))


def test_initialize_pair_spacing(tiny_scene):
    b = bundle_with_points(tiny_scene, [[0.0, 0, 0], [2.0, 0, 0]])
    p = initialize(b, TrainConfig())
    assert np.allclose(p.log_scales, np.log(2.0), atol=1e-12)


def test_initialize_depth_backprojection(tiny_scene):
    _, _, bundle = tiny_scene
    config = TrainConfig(init_stride=8)
    p = initialize(bundle, config)

    pts, cols = [], []
    for rec in bundle.views("train"):
        h, w = rec.depth.values.shape
        vv, uu = np.mgrid[0:h:8, 0:w:8]
        d = rec.depth.values[vv, uu]
        ok = np.isfinite(d) & (d > 0)
        vv, uu, d = vv[ok], uu[ok], d[ok]
        cam = rec.camera
        for v, u, z in zip(vv, uu, d):
            ray = np.array([(u + 0.5 - cam.cx) / cam.fx * z,
                            (v + 0.5 - cam.cy) / cam.fy * z, z])
            pts.append(cam.R.T @ (ray - cam.tvec))
            cols.append(rec.image[v, u])
    pts = np.stack(pts)
    assert p.positions.shape == pts.shape
    assert np.allclose(p.positions, pts, atol=1e-10)
    assert np.allclose(p.sh[:, :, 0], rgb_to_dc(np.clip(np.stack(cols), 0, 1)), atol=1e-12)


def test_initialize_without_points_or_depth(tiny_scene):
    _, _, bundle = tiny_scene
    records = [type(r)(camera=r.camera, image=r.image, depth=None, split=r.split,
                       name=r.name) for r in bundle.records]
    with pytest.raises(ConfigurationError):
        initialize(SceneBundle(records=records), TrainConfig())


def test_initialize_respects_max_points(tiny_scene):
    _, _, bundle = tiny_scene
    p = initialize(bundle, TrainConfig(init_stride=4, max_init_points=50))
    assert len(p) == 50


def test_params_from_cloud_round_trip():
    rng = np.random.default_rng(0)
    cloud = random_cloud(rng, n=9, degree=1)
    p = params_from_cloud(cloud, TrainConfig(sh_degree=1))
    back = p.cloud()
    assert np.array_equal(back.positions, cloud.positions)
    assert np.allclose(back.scales, cloud.scales, atol=1e-12)
    assert np.allclose(back.opacities, cloud.opacities, atol=1e-9)
    assert np.array_equal(back.sh, cloud.sh)
    # storage degree reshapes coefficients: truncate down, zero-pad up
    trunc = params_from_cloud(cloud, TrainConfig(sh_degree=0))
    assert trunc.sh.shape == (9, 3, 1)
    assert np.array_equal(trunc.sh[:, :, 0], cloud.sh[:, :, 0])
    pad = params_from_cloud(random_cloud(rng, n=4), TrainConfig(sh_degree=1))
    assert pad.sh.shape == (4, 3, 4)
    assert np.all(pad.sh[:, :, 1:] == 0.0)


def test_scene_scale_pinned():
    class Stub:
        def __init__(self, c):
            self.center = np.asarray(c, dtype=np.float64)

    assert abs(scene_scale([Stub([0, 0, 0]), Stub([2, 0, 0])]) - 1.1) < 1e-12


def small_params(n, scale=0.01, opacity=0.5):
    return Params(
        positions=np.arange(n * 3, dtype=np.float64).reshape(n, 3),
        rotations=np.tile([1.0, 0, 0, 0], (n, 1)),
        log_scales=np.full((n, 3), np.log(scale)),
        opacity_logits=np.full(n, np.log(opacity / (1 - opacity))),
        sh=np.zeros((n, 3, 1)),
    )


def test_densify_clones_small_high_gradient():
    config = TrainConfig()
    params = small_params(2, scale=0.005)  # below percent_dense * extent = 0.01
    adam = Adam(params)
    rng = np.random.default_rng(0)
    n = densify_and_prune(params, adam, np.array([3e-4, 0.0]), 1.0, config, rng)
    assert n == 3
    assert np.array_equal(params.positions[2], params.positions[0])
    assert np.array_equal(params.log_scales[2], params.log_scales[0])
    assert adam.m["positions"].shape == (3, 3)
    assert np.all(adam.m["positions"][2] == 0.0)


def test_densify_splits_large_high_gradient():
    config = TrainConfig()
    params = small_params(1, scale=0.05)  # above percent_dense * extent
    parent_pos = params.positions[0].copy()
    parent_ls = params.log_scales[0].copy()
    adam = Adam(params)
    rng = np.random.default_rng(1)
    n = densify_and_prune(params, adam, np.array([3e-4]), 1.0, config, rng)
    assert n == 2  # parent replaced by two children
    assert np.allclose(params.log_scales, parent_ls - np.log(1.6))
    # children scatter inside the parent footprint
    d = np.linalg.norm(params.positions - parent_pos, axis=1)
    assert np.all(d > 0) and np.all(d < 0.05 * 5)


def test_prune_transparent():
    config = TrainConfig()
    params = small_params(3)
    params.opacity_logits[1] = -8.0  # sigmoid ~ 3e-4 < 5e-3
    adam = Adam(params)
    n = densify_and_prune(params, adam, np.zeros(3), 1.0, config,
                          np.random.default_rng(0))
    assert n == 2
    assert np.array_equal(params.positions[:, 0], [0.0, 6.0])


def test_prune_clamped_to_half():
    config = TrainConfig()
    params = small_params(10)
    logits = -8.0 - np.arange(10, dtype=np.float64)  # all transparent, ordered
    params.opacity_logits = logits[::-1].copy()      # most transparent first
    adam = Adam(params)
    n = densify_and_prune(params, adam, np.zeros(10), 1.0, config,
                          np.random.default_rng(0))
    assert n == 5
    # survivors are the five least transparent
    assert np.allclose(np.sort(params.opacity_logits), np.sort(logits[:5]))
    # and a lone transparent gaussian never gets removed (limit is n // 2 = 0)
    solo = small_params(1)
    solo.opacity_logits[:] = -9.0
    assert densify_and_prune(solo, Adam(solo), np.zeros(1), 1.0, config,
                             np.random.default_rng(0)) == 1


def test_train_descends_from_perfect_init(tiny_scene):
    _, cloud, bundle = tiny_scene
    config = TrainConfig(iterations=50, seed=0)
    _, report = train(bundle, config, init_cloud=cloud)
    losses = report.losses()
    assert len(losses) == 50
    assert losses[-1] <= losses[0]


def test_train_is_deterministic(tiny_scene):
    _, cloud, bundle = tiny_scene
    config = TrainConfig(iterations=8, seed=3)
    _, r1 = train(bundle, config, init_cloud=cloud)
    _, r2 = train(bundle, config, init_cloud=cloud)
    assert r1.losses() == r2.losses()
    assert r1.final_gaussians == r2.final_gaussians


def test_sh_storage_above_active_stays_frozen(tiny_scene):
    _, cloud, bundle = tiny_scene
    config = TrainConfig(iterations=6, sh_degree=0, sh_storage_degree=1)
    out, report = train(bundle, config, init_cloud=cloud)
    assert out.sh.shape[2] == 4
    assert np.all(out.sh[:, :, 1:] == 0.0)  # inactive bands never move


def test_train_without_training_views(tiny_scene):
    _, _, bundle = tiny_scene
    marks = [r.split for r in bundle.records]
    for r in bundle.records:
        r.split = "test"
    try:
        with pytest.raises(ConfigurationError):
            train(SceneBundle(records=bundle.records), TrainConfig(iterations=1))
    finally:
        for r, m in zip(bundle.records, marks):
            r.split = m


def test_train_faults_on_nonfinite_loss(tiny_scene):
    _, cloud, bundle = tiny_scene
    rec = bundle.records[0]
    saved = rec.image
    # huge but finite pixels: squaring in SSIM overflows to inf -> nan loss
    rec.image = np.full_like(saved, 1e200)
    try:
        with np.errstate(over="ignore", invalid="ignore"), pytest.raises(TrainingFault) as info:
            train(bundle, TrainConfig(iterations=3), init_cloud=cloud)
        assert info.value.iteration == 1
        assert "gaussians" in info.value.diagnostics
    finally:
        rec.image = saved


def test_evaluate_perfect_cloud(tiny_scene):
    _, cloud, bundle = tiny_scene
    from splatsim.synthetic import assign_splits

    marks = [r.split for r in bundle.records]
    assign_splits(bundle, 2)
    try:
        m = evaluate(cloud, bundle.views("test"), TrainConfig())
        assert m["psnr"] == 100.0
        assert m["ssim"] > 0.9999
        assert m["n_views"] == len(bundle.views("test"))
        assert "depth_rmse" in m
    finally:
        for r, mk in zip(bundle.records, marks):
            r.split = mk
