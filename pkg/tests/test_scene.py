"""GaussianSet invariants, point-cloud initialization, skybox."""

import numpy as np
import pytest

from hsplat.errors import DataError
from hsplat.geometry import Parametrization
from hsplat.scene import (
    GaussianSet,
    PointCloud,
    add_skybox,
    init_from_points,
    inverse_sigmoid,
    rgb_to_sh_dc,
)
from hsplat.sh import SH_C0

from conftest import PARAMETRIZATIONS, make_random_set


def _brute_knn_scale(positions, k=3):
    """Independent mean k-NN distance, one explicit loop per point."""
    out = []
    for i, p in enumerate(positions):
        d = sorted(
            np.linalg.norm(q - p) for j, q in enumerate(positions) if j != i
        )
        out.append(np.mean(d[: min(k, len(d))]))
    return np.array(out)


class TestGaussianSet:
    def test_shape_validation(self):
        gs = make_random_set(np.random.default_rng(0), n=4)
        with pytest.raises(DataError):
            GaussianSet(
                geom=gs.geom, opacity_raw=gs.opacity_raw[:2],
                sh_coeffs=gs.sh_coeffs, max_sh_degree=gs.max_sh_degree,
            )
        with pytest.raises(DataError):
            GaussianSet(
                geom=gs.geom, opacity_raw=gs.opacity_raw,
                sh_coeffs=gs.sh_coeffs[:, :1, :], max_sh_degree=gs.max_sh_degree,
            )
        with pytest.raises(DataError):
            GaussianSet(
                geom=gs.geom, opacity_raw=gs.opacity_raw, sh_coeffs=gs.sh_coeffs,
                active_sh_degree=3, max_sh_degree=1,
            )

    def test_select_concat_copy(self):
        gs = make_random_set(np.random.default_rng(1), n=5)
        sel = gs.select(np.array([0, 3]))
        assert sel.count == 2
        both = sel.concat(sel)
        assert both.count == 4
        c = gs.copy()
        c.opacity_raw[:] = 99.0
        assert gs.opacity_raw.max() < 99.0

    def test_opacity_activation(self):
        gs = make_random_set(np.random.default_rng(2), n=3)
        o = gs.opacities()
        np.testing.assert_allclose(inverse_sigmoid(o), gs.opacity_raw, atol=1e-12)
        assert ((o > 0) & (o < 1)).all()


class TestInitFromPoints:
    def test_single_point_homogeneous_weight(self):
        pc = PointCloud(positions=np.array([[0.0, 0.0, 10.0]]),
                        colors=np.full((1, 3), 0.5))
        gs = init_from_points(pc, Parametrization.HOMOGENEOUS)
        np.testing.assert_allclose(gs.geom.rho, [np.log(0.1)], atol=1e-12)
        np.testing.assert_allclose(gs.positions(), [[0.0, 0.0, 10.0]], atol=1e-9)

    def test_knn_scale_against_bruteforce(self):
        rng = np.random.default_rng(3)
        pts = rng.normal(size=(30, 3)) * 2.0
        pc = PointCloud(positions=pts, colors=np.full((30, 3), 0.3))
        expected = _brute_knn_scale(pts)
        for par in PARAMETRIZATIONS:
            gs = init_from_points(pc, par)
            np.testing.assert_allclose(gs.scales(), expected[:, None] * np.ones(3),
                                       rtol=1e-9)

    def test_collinear_points_example(self):
        # Points at x = 0, 1, 3: each has only two neighbors, so the mean
        # 3-NN distance degenerates to (d1 + d2) / 2.
        pts = np.array([[0.0, 0, 0], [1.0, 0, 0], [3.0, 0, 0]])
        pc = PointCloud(positions=pts, colors=np.full((3, 3), 0.5))
        gs = init_from_points(pc, Parametrization.CARTESIAN)
        expected = _brute_knn_scale(pts)
        np.testing.assert_allclose(gs.scales()[:, 0], expected, rtol=1e-12)

    def test_defaults(self):
        rng = np.random.default_rng(4)
        colors = rng.uniform(0, 1, (8, 3))
        pc = PointCloud(positions=rng.normal(size=(8, 3)), colors=colors)
        gs = init_from_points(pc, Parametrization.CARTESIAN)
        np.testing.assert_allclose(gs.opacities(), 0.1, atol=1e-12)
        np.testing.assert_allclose(gs.sh_coeffs[:, 0, :], rgb_to_sh_dc(colors))
        np.testing.assert_allclose(gs.sh_coeffs[:, 1:, :], 0.0)
        assert gs.active_sh_degree == 0 and gs.max_sh_degree == 3
        np.testing.assert_allclose(gs.geom.rot[:, 0], 1.0)
        # DC inversion reproduces the color through the SH offset.
        np.testing.assert_allclose(SH_C0 * gs.sh_coeffs[:, 0, :] + 0.5, colors)

    def test_w_init_variants(self):
        rng = np.random.default_rng(5)
        pts = rng.normal(size=(20, 3)) * 5 + 10
        pc = PointCloud(positions=pts, colors=np.full((20, 3), 0.5))
        d = np.linalg.norm(pts, axis=-1)
        gs = init_from_points(pc, Parametrization.HOMOGENEOUS, w_init="1/d")
        np.testing.assert_allclose(np.exp(gs.geom.rho), 1.0 / d, rtol=1e-12)
        gs = init_from_points(pc, Parametrization.HOMOGENEOUS, w_init=0.25)
        np.testing.assert_allclose(gs.geom.rho, np.log(0.25))
        gs = init_from_points(pc, Parametrization.HOMOGENEOUS, w_init="random")
        w = np.exp(gs.geom.rho)
        assert ((w >= 0.01) & (w <= 100.0)).all()
        assert w.std() > 0
        np.testing.assert_allclose(gs.positions(), pts, rtol=1e-9)
        with pytest.raises(DataError):
            init_from_points(pc, Parametrization.HOMOGENEOUS, w_init="bogus")

    def test_empty_cloud_rejected(self):
        pc = PointCloud(positions=np.zeros((0, 3)), colors=np.zeros((0, 3)))
        with pytest.raises(DataError):
            init_from_points(pc, Parametrization.CARTESIAN)

    def test_cloud_validation(self):
        with pytest.raises(DataError):
            PointCloud(positions=np.zeros((3, 2)), colors=np.zeros((3, 2)))
        with pytest.raises(DataError):
            PointCloud(positions=np.zeros((3, 3)), colors=np.zeros((2, 3)))
        with pytest.raises(DataError):
            PointCloud(positions=np.full((1, 3), np.inf), colors=np.zeros((1, 3)))


class TestSkybox:
    def test_points_on_hemisphere(self):
        gs = make_random_set(np.random.default_rng(6), n=4, max_sh_degree=3)
        out = add_skybox(gs, 500, 50.0, (0.3, 0.5, 0.9))
        assert out.count == 504
        sky = out.positions()[4:]
        np.testing.assert_allclose(np.linalg.norm(sky, axis=-1), 50.0, rtol=1e-9)
        assert (sky[:, 2] >= 0).all()

    def test_homogeneous_weight_and_axis(self):
        gs = make_random_set(
            np.random.default_rng(7), Parametrization.HOMOGENEOUS, n=2,
            max_sh_degree=3,
        )
        out = add_skybox(gs, 100, 30.0, (0.3, 0.5, 0.9), up_axis=0)
        np.testing.assert_allclose(out.geom.rho[2:], np.log(1.0 / 30.0))
        assert (out.positions()[2:, 0] >= 0).all()

    def test_edge_cases(self):
        gs = make_random_set(np.random.default_rng(8), n=3, max_sh_degree=3)
        assert add_skybox(gs, 0, 10.0, (0, 0, 0)) is gs
        with pytest.raises(DataError):
            add_skybox(gs, -1, 10.0, (0, 0, 0))
        with pytest.raises(DataError):
            add_skybox(gs, 10, 0.0, (0, 0, 0))
