"""PNG/PFM/PLY round trips, manifests, and checkpoint save/load/resume."""

import json
import os
import struct

import numpy as np
import pytest
from PIL import Image

from hsplat.errors import DataError
from hsplat.geometry import Parametrization
from hsplat.optim import TrainConfig, Trainer
from hsplat.render import render
from hsplat.scene import PointCloud
from hsplat import sceneio
from hsplat.sceneio import (
    CHECKPOINT_MAGIC,
    export_3dgs_ply,
    load_checkpoint,
    load_manifest,
    read_3dgs_ply,
    read_pfm,
    read_png,
    read_ply_points,
    restore_trainer,
    save_checkpoint,
    write_manifest,
    write_pfm,
    write_png,
    write_ply_points,
)

from conftest import PARAMETRIZATIONS, make_camera, make_random_set


class TestPNG:
    def test_round_trip_quantization(self, tmp_path):
        rng = np.random.default_rng(0)
        img = rng.uniform(0, 1, (9, 7, 3))
        p = tmp_path / "img.png"
        write_png(p, img)
        back = read_png(p)
        assert np.abs(back - img).max() <= 0.5 / 255.0 + 1e-12

    def test_16bit_rejected(self, tmp_path):
        p = tmp_path / "deep.png"
        Image.fromarray(np.zeros((4, 4), dtype=np.uint16)).save(p, format="PNG")
        with pytest.raises(DataError):
            read_png(p)

    def test_non_png_rejected(self, tmp_path):
        p = tmp_path / "img.jpg"
        Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8)).save(p, format="JPEG")
        with pytest.raises(DataError):
            read_png(p)


class TestPFM:
    def test_round_trip_both_endiannesses(self, tmp_path):
        depth = np.random.default_rng(1).uniform(0, 500, (6, 11))
        for le in (True, False):
            p = tmp_path / f"d_{le}.pfm"
            write_pfm(p, depth, little_endian=le)
            np.testing.assert_allclose(read_pfm(p), depth.astype(np.float32),
                                       rtol=0)

    def test_errors(self, tmp_path):
        p = tmp_path / "bad.pfm"
        p.write_bytes(b"PF\n2 2\n-1.0\n" + b"\x00" * 48)  # color magic
        with pytest.raises(DataError):
            read_pfm(p)
        p.write_bytes(b"Pf\n4 4\n-1.0\n" + b"\x00" * 8)  # truncated
        with pytest.raises(DataError):
            read_pfm(p)
        with pytest.raises(DataError):
            write_pfm(tmp_path / "x.pfm", np.zeros((2, 2, 3)))


class TestPLY:
    def test_points_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        pc = PointCloud(
            positions=rng.normal(size=(20, 3)).astype(np.float32).astype(float),
            colors=np.round(rng.uniform(0, 1, (20, 3)) * 255) / 255.0,
        )
        p = tmp_path / "points.ply"
        write_ply_points(p, pc)
        back = read_ply_points(p)
        np.testing.assert_allclose(back.positions, pc.positions, atol=1e-6)
        np.testing.assert_allclose(back.colors, pc.colors, atol=1e-12)

    def test_ascii_and_missing_colors(self, tmp_path):
        p = tmp_path / "ascii.ply"
        p.write_text(
            "ply\nformat ascii 1.0\nelement vertex 2\n"
            "property float x\nproperty float y\nproperty float z\n"
            "end_header\n1 2 3\n-4 5.5 6\n"
        )
        pc = read_ply_points(p)
        np.testing.assert_allclose(pc.positions, [[1, 2, 3], [-4, 5.5, 6]])
        np.testing.assert_allclose(pc.colors, 0.5)

    def test_unsupported_features_named(self, tmp_path):
        p = tmp_path / "list.ply"
        p.write_text(
            "ply\nformat ascii 1.0\nelement face 1\n"
            "property list uchar int vertex_indices\nend_header\n3 0 1 2\n"
        )
        with pytest.raises(DataError, match="vertex_indices"):
            read_ply_points(p)
        p2 = tmp_path / "be.ply"
        p2.write_text(
            "ply\nformat binary_big_endian 1.0\nelement vertex 0\n"
            "property float x\nproperty float y\nproperty float z\nend_header\n"
        )
        with pytest.raises(DataError, match="binary_big_endian"):
            read_ply_points(p2)
        p3 = tmp_path / "no_xyz.ply"
        p3.write_text(
            "ply\nformat ascii 1.0\nelement vertex 1\n"
            "property float x\nproperty float y\nend_header\n0 0\n"
        )
        with pytest.raises(DataError, match="'z'"):
            read_ply_points(p3)

    def test_splat_export_import_idempotent(self, tmp_path):
        for par in PARAMETRIZATIONS:
            gs = make_random_set(np.random.default_rng(3), par, n=6,
                                 max_sh_degree=2)
            p1 = tmp_path / f"{par.value}_a.ply"
            p2 = tmp_path / f"{par.value}_b.ply"
            export_3dgs_ply(p1, gs)
            back = read_3dgs_ply(p1)
            assert back.parametrization is Parametrization.CARTESIAN
            assert back.max_sh_degree == 2
            np.testing.assert_allclose(back.positions(), gs.positions(),
                                       rtol=1e-6, atol=1e-5)
            np.testing.assert_allclose(back.scales(), gs.scales(), rtol=1e-5)
            np.testing.assert_allclose(back.sh_coeffs, gs.sh_coeffs, atol=1e-6)
            # Float32 fixed point: a second export is byte-identical.
            export_3dgs_ply(p2, back)
            again = read_3dgs_ply(p2)
            for name, arr in back.param_arrays().items():
                np.testing.assert_array_equal(arr, again.param_arrays()[name])


class TestManifest:
    def _write_scene(self, tmp_path, skew=0.0, drop_depth=False):
        rng = np.random.default_rng(4)
        cam = make_camera(8)
        img = rng.uniform(0, 1, (8, 8, 3))
        depth = rng.uniform(0, 10, (8, 8))
        pc = PointCloud(positions=rng.normal(size=(5, 3)),
                        colors=np.full((5, 3), 0.5))
        write_ply_points(tmp_path / "points.ply", pc)
        write_png(tmp_path / "v0.png", img)
        if not drop_depth:
            write_pfm(tmp_path / "v0.pfm", depth)
        R = cam.rotation + skew
        view = {
            "image_path": "v0.png", "depth_path": "v0.pfm",
            "fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
            "width": 8, "height": 8,
            "rotation": [float(x) for x in R.reshape(-1)],
            "translation": [float(x) for x in cam.translation],
        }
        path = tmp_path / "manifest.json"
        write_manifest(path, "points.ply", [view])
        return path

    def test_load_round_trip(self, tmp_path):
        path = self._write_scene(tmp_path)
        scene = load_manifest(path)
        assert len(scene.views) == 1
        v = scene.views[0]
        assert v.image.shape == (8, 8, 3) and v.depth.shape == (8, 8)
        assert scene.point_cloud.positions.shape == (5, 3)
        np.testing.assert_allclose(
            v.camera.rotation @ v.camera.rotation.T, np.eye(3), atol=1e-12
        )

    def test_slightly_skewed_rotation_fixed_with_warning(self, tmp_path):
        path = self._write_scene(tmp_path, skew=1e-8)
        with pytest.warns(UserWarning, match="re-orthonormalizing"):
            scene = load_manifest(path)
        R = scene.views[0].camera.rotation
        np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)

    def test_badly_skewed_rotation_rejected(self, tmp_path):
        path = self._write_scene(tmp_path, skew=1e-3)
        with pytest.raises(DataError, match="orthonormal"):
            load_manifest(path)

    def test_missing_depth_warns_and_loads(self, tmp_path):
        path = self._write_scene(tmp_path, drop_depth=True)
        with pytest.warns(UserWarning, match="depth"):
            scene = load_manifest(path)
        assert scene.views[0].depth is None

    def test_version_and_json_errors(self, tmp_path):
        path = self._write_scene(tmp_path)
        doc = json.loads(path.read_text())
        doc["version"] = 99
        path.write_text(json.dumps(doc))
        with pytest.raises(DataError, match="version"):
            load_manifest(path)
        path.write_text("{not json")
        with pytest.raises(DataError, match="JSON"):
            load_manifest(path)
        with pytest.raises(DataError):
            load_manifest(tmp_path / "absent.json")

    def test_image_size_mismatch(self, tmp_path):
        path = self._write_scene(tmp_path)
        doc = json.loads(path.read_text())
        doc["views"][0]["width"] = 16
        path.write_text(json.dumps(doc))
        with pytest.raises(DataError):
            load_manifest(path)


def _tiny_trainer(par=Parametrization.HOMOGENEOUS, seed=50, iterations=40):
    rng = np.random.default_rng(seed)
    gs = make_random_set(rng, par, n=8)
    cams = [make_camera(16, distance=d) for d in (5.0, 6.0, 7.0)]
    views = [(c, render(gs, c).radiance * 0.9) for c in cams]
    cfg = TrainConfig(iterations=iterations, densify_start=10,
                      densify_interval=10, densify_stop=iterations,
                      opacity_reset_interval=10**9, sh_degree_interval=15)
    return Trainer(gs.copy(), views, cfg), views


class TestCheckpoint:
    def test_save_load_identity(self, tmp_path):
        for par in PARAMETRIZATIONS:
            trainer, _ = _tiny_trainer(par)
            trainer.run(10)
            p = tmp_path / f"{par.value}.hgsc"
            save_checkpoint(p, trainer)
            ckpt = load_checkpoint(p)
            assert ckpt.parametrization == par.value
            assert ckpt.iteration == 10
            for name, arr in trainer.gaussians.param_arrays().items():
                np.testing.assert_array_equal(
                    ckpt.gaussians.param_arrays()[name], arr
                )
                np.testing.assert_array_equal(ckpt.adam_m[name],
                                              trainer.adam.m[name])
            assert ckpt.adam_step_count == trainer.adam.step_count
            assert ckpt.extent == trainer.extent

    def test_resume_matches_uninterrupted(self, tmp_path):
        full, _ = _tiny_trainer(iterations=40)
        full.run(40)

        half, views = _tiny_trainer(iterations=40)
        half.run(20)
        p = tmp_path / "half.hgsc"
        save_checkpoint(p, half)
        resumed = restore_trainer(load_checkpoint(p), views)
        resumed.run(40)

        assert resumed.gaussians.count == full.gaussians.count
        for name, arr in full.gaussians.param_arrays().items():
            np.testing.assert_array_equal(resumed.gaussians.param_arrays()[name],
                                          arr)
        np.testing.assert_array_equal(resumed.grad_accum, full.grad_accum)

    def test_bad_magic_and_version(self, tmp_path):
        p = tmp_path / "bad.hgsc"
        p.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(DataError, match="magic"):
            load_checkpoint(p)
        p.write_bytes(CHECKPOINT_MAGIC + struct.pack("<I", 99) + b"\x00" * 8)
        with pytest.raises(DataError, match="version"):
            load_checkpoint(p)

    def test_truncated_payload(self, tmp_path):
        trainer, _ = _tiny_trainer()
        trainer.run(3)
        p = tmp_path / "full.hgsc"
        save_checkpoint(p, trainer)
        data = p.read_bytes()
        q = tmp_path / "cut.hgsc"
        q.write_bytes(data[: len(data) - 64])
        with pytest.raises(DataError, match="truncated"):
            load_checkpoint(q)
