"""Shared helpers: small random scenes with a camera that sees them."""

import numpy as np
import pytest

from hsplat.camera import Camera, look_at_camera
from hsplat.geometry import Parametrization, encode_from_cartesian
from hsplat.scene import GaussianSet, inverse_sigmoid
from hsplat.sh import num_coeffs

PARAMETRIZATIONS = [
    Parametrization.CARTESIAN,
    Parametrization.HOMOGENEOUS,
    Parametrization.INVERTED_SPHERICAL,
]


def make_camera(size=12, fx=None, distance=6.0):
    """Camera on the -x axis looking at the origin."""
    fx = fx if fx is not None else 1.5 * size
    return look_at_camera(
        np.array([-distance, 0.0, 0.0]), np.zeros(3), np.array([0.0, 0.0, 1.0]),
        fx, fx, size, size,
    )


def make_random_set(
    rng,
    parametrization=Parametrization.CARTESIAN,
    n=6,
    max_sh_degree=1,
    opacity_range=(0.05, 0.9),
    spread=1.0,
    scale_range=(0.2, 0.6),
):
    """Random Gaussians clustered at the origin, never exactly degenerate."""
    mu = rng.normal(scale=spread, size=(n, 3))
    s = rng.uniform(*scale_range, size=(n, 3))
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    geom = encode_from_cartesian(mu, s, q, parametrization)
    k = num_coeffs(max_sh_degree)
    sh = 0.3 * rng.normal(size=(n, k, 3))
    sh[:, 0, :] = rng.uniform(-0.5, 0.5, size=(n, 3))
    opac = rng.uniform(*opacity_range, size=n)
    return GaussianSet(
        geom=geom,
        opacity_raw=inverse_sigmoid(opac),
        sh_coeffs=sh,
        active_sh_degree=max_sh_degree,
        max_sh_degree=max_sh_degree,
    )


@pytest.fixture(scope="session")
def small_scene():
    rng = np.random.default_rng(7)
    return make_random_set(rng), make_camera()
