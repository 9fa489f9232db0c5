import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from splatsim.io import (
    FormatError,
    StructuralError,
    load_cloud,
    load_ply,
    load_scene,
    read_pfm,
    save_cloud,
    save_scene,
    write_pfm,
)
from splatsim.scene import Camera, DepthMap, GaussianCloud, SceneBundle, ViewRecord
from splatsim.synthetic import look_at_camera


def f32_cloud(rng, n=4, degree=1):
    """Random cloud whose values are exactly float32-representable, so the
    float32 container round-trips bit for bit."""
    k = (degree + 1) ** 2
    f = lambda a: a.astype(np.float32).astype(np.float64)
    rot = rng.normal(0, 1, (n, 4)) + np.array([1.5, 0, 0, 0])
    return GaussianCloud(
        positions=f(rng.uniform(-1, 1, (n, 3))),
        rotations=f(rot),
        scales=f(rng.uniform(0.01, 1.0, (n, 3))),
        opacities=f(rng.uniform(0.05, 0.95, n)),
        sh=f(rng.normal(0, 0.5, (n, 3, k))),
    )


def test_gsc_round_trip_bitwise(tmp_path):
    cloud = f32_cloud(np.random.default_rng(0), n=3)
    p = tmp_path / "c.gsc"
    save_cloud(p, cloud)
    back = load_cloud(p)
    for a, b in [
        (cloud.positions, back.positions),
        (cloud.rotations, back.rotations),
        (cloud.scales, back.scales),
        (cloud.opacities, back.opacities),
        (cloud.sh, back.sh),
    ]:
        assert np.array_equal(a, b)


@settings(deadline=None, max_examples=25)
@given(st.integers(0, 2**32 - 1), st.integers(0, 3))
def test_gsc_round_trip_property(tmp_path_factory, seed, degree):
    cloud = f32_cloud(np.random.default_rng(seed), n=6, degree=degree)
    p = tmp_path_factory.mktemp("gsc") / "c.gsc"
    save_cloud(p, cloud)
    back = load_cloud(p)
    assert np.array_equal(cloud.positions, back.positions)
    assert np.array_equal(cloud.sh, back.sh)
    assert back.sh_degree == degree


def test_gsc_empty_cloud(tmp_path):
    empty = GaussianCloud(
        positions=np.zeros((0, 3)), rotations=np.zeros((0, 4)),
        scales=np.zeros((0, 3)), opacities=np.zeros(0), sh=np.zeros((0, 3, 1)),
    )
    p = tmp_path / "e.gsc"
    save_cloud(p, empty)
    back = load_cloud(p)
    assert len(back) == 0
    assert back.sh.shape == (0, 3, 1)


def test_gsc_extra_records_is_structural_error(tmp_path):
    cloud = f32_cloud(np.random.default_rng(1), n=3, degree=0)
    p = tmp_path / "c.gsc"
    save_cloud(p, cloud)
    data = bytearray(p.read_bytes())
    # claim 2 records while 3 are present
    nl = data.index(b"\n")
    header = json.loads(data[:nl].decode())
    header["count"] = 2
    p.write_bytes(json.dumps(header).encode() + b"\n" + bytes(data[nl + 1:]))
    with pytest.raises(StructuralError):
        load_cloud(p)


def test_gsc_truncated_body_is_structural_error(tmp_path):
    cloud = f32_cloud(np.random.default_rng(2), n=3)
    p = tmp_path / "c.gsc"
    save_cloud(p, cloud)
    p.write_bytes(p.read_bytes()[:-5])
    with pytest.raises(StructuralError):
        load_cloud(p)


def test_gsc_malformed_header_reports_offset(tmp_path):
    p = tmp_path / "bad.gsc"
    p.write_bytes(b"{not json\n\x00\x00")
    with pytest.raises(FormatError) as e:
        load_cloud(p)
    assert e.value.offset == 0


def test_gsc_bad_magic(tmp_path):
    p = tmp_path / "bad.gsc"
    p.write_bytes(b'{"magic":"NOPE","count":0,"sh_degree":0}\n')
    with pytest.raises(FormatError):
        load_cloud(p)


def test_gsc_missing_newline(tmp_path):
    p = tmp_path / "bad.gsc"
    p.write_bytes(b'{"magic":"GSC1"}')
    with pytest.raises(FormatError):
        load_cloud(p)


def test_pfm_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    vals = rng.uniform(0, 10, (5, 7)).astype(np.float32).astype(np.float64)
    p = tmp_path / "d.pfm"
    write_pfm(p, vals)
    assert np.array_equal(read_pfm(p), vals)


def test_pfm_rejects_garbage(tmp_path):
    p = tmp_path / "x.pfm"
    p.write_bytes(b"P5\n1 1\n255\n\x00")
    with pytest.raises(FormatError):
        read_pfm(p)


def test_ply_ascii(tmp_path):
    p = tmp_path / "pts.ply"
    p.write_text(
        "ply\nformat ascii 1.0\nelement vertex 2\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        "end_header\n"
        "0 0 1 255 0 0\n"
        "1 2 3 0 255 0\n"
    )
    pos, col = load_ply(p)
    assert np.allclose(pos, [[0, 0, 1], [1, 2, 3]])
    assert np.allclose(col, [[1, 0, 0], [0, 1, 0]])


def test_ply_binary(tmp_path):
    p = tmp_path / "pts.ply"
    header = (
        b"ply\nformat binary_little_endian 1.0\nelement vertex 2\n"
        b"property float x\nproperty float y\nproperty float z\n"
        b"property uchar red\nproperty uchar green\nproperty uchar blue\n"
        b"end_header\n"
    )
    row = np.dtype([("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
                    ("red", "u1"), ("green", "u1"), ("blue", "u1")])
    body = np.array([(0, 0, 1, 255, 0, 0), (1, 2, 3, 0, 255, 0)], dtype=row)
    p.write_bytes(header + body.tobytes())
    pos, col = load_ply(p)
    assert np.allclose(pos, [[0, 0, 1], [1, 2, 3]])
    assert np.allclose(col, [[1, 0, 0], [0, 1, 0]])


def test_ply_truncated_binary(tmp_path):
    p = tmp_path / "pts.ply"
    p.write_bytes(
        b"ply\nformat binary_little_endian 1.0\nelement vertex 5\n"
        b"property float x\nproperty float y\nproperty float z\n"
        b"end_header\n" + b"\x00" * 10
    )
    with pytest.raises(StructuralError):
        load_ply(p)


def scene_bundle(with_depth=True):
    rng = np.random.default_rng(4)
    cams = [
        look_at_camera(np.array([0.0, -1.5, 1.0]), np.zeros(3), (32, 24), focal=40.0),
        look_at_camera(np.array([0.5, -1.4, 1.1]), np.zeros(3), (32, 24), focal=40.0),
    ]
    records = []
    for i, cam in enumerate(cams):
        img = rng.uniform(0, 1, (24, 32, 3))
        depth = DepthMap(rng.uniform(0.5, 2.0, (24, 32)).astype(np.float32).astype(np.float64)) if with_depth else None
        records.append(ViewRecord(camera=cam, image=img, depth=depth,
                                  split="train" if i == 0 else "test"))
    return SceneBundle(records=records)


def test_scene_dir_round_trip(tmp_path):
    bundle = scene_bundle()
    d = tmp_path / "scene"
    save_scene(d, bundle)
    back = load_scene(d)
    assert len(back.records) == 2
    for a, b in zip(bundle.records, back.records):
        assert np.allclose(a.camera.qvec, b.camera.qvec, atol=1e-12)
        assert np.allclose(a.camera.tvec, b.camera.tvec, atol=1e-12)
        assert a.split == b.split
        # images pass through 8-bit PNG
        assert np.abs(a.image - b.image).max() <= 0.5 / 255 + 1e-9
        assert np.array_equal(a.depth.values, b.depth.values)


def test_scene_dir_missing_cameras_json(tmp_path):
    with pytest.raises(StructuralError):
        load_scene(tmp_path)


def test_scene_dir_missing_image(tmp_path):
    d = tmp_path / "scene"
    save_scene(d, scene_bundle(with_depth=False))
    (d / "view_0000.png").unlink()
    with pytest.raises(StructuralError):
        load_scene(d)
