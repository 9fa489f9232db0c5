import numpy as np
import pytest

from splatsim.scene import GaussianCloud
from splatsim.synthetic import SyntheticSpec, generate, look_at_camera


def random_cloud(rng, n=20, degree=0, spread=0.5, opacity=(0.2, 0.9)):
    """Cloud clustered near the origin, safe for cameras ~2m away."""
    k = (degree + 1) ** 2
    sh = rng.normal(0.0, 0.3, (n, 3, k))
    sh[:, :, 0] = rng.uniform(-0.8, 0.8, (n, 3))
    return GaussianCloud(
        positions=rng.uniform(-spread, spread, (n, 3)),
        rotations=rng.normal(0.0, 1.0, (n, 4)) + np.array([2.0, 0, 0, 0]),
        scales=rng.uniform(0.04, 0.15, (n, 3)),
        opacities=rng.uniform(*opacity, n),
        sh=sh,
    )


def random_camera(rng, width=48, height=48, focal=None, distance=(1.6, 2.4)):
    """Camera on a random direction from the origin, looking back at it."""
    d = rng.uniform(*distance)
    v = rng.normal(0.0, 1.0, 3)
    v /= np.linalg.norm(v)
    target = rng.uniform(-0.1, 0.1, 3)
    if focal is None:
        focal = 1.2 * max(width, height)
    return look_at_camera(d * v, target, (width, height), focal=focal)


@pytest.fixture(scope="session")
def tiny_scene():
    """Small synthetic bundle shared by trainer-level tests."""
    spec = SyntheticSpec(grid=14, cameras=4, width=48, height=48, focal=60.0, seed=3)
    cloud, bundle = generate(spec)
    return spec, cloud, bundle
