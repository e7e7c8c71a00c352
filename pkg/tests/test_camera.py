"""Camera pose validation and look-at construction."""

import numpy as np
import pytest

from hsplat.camera import Camera, look_at_camera
from hsplat.errors import DataError


def test_center_inverts_pose():
    cam = look_at_camera(
        np.array([1.0, -2.0, 3.0]), np.zeros(3), np.array([0.0, 0.0, 1.0]),
        50.0, 50.0, 32, 32,
    )
    np.testing.assert_allclose(cam.center, [1.0, -2.0, 3.0], atol=1e-12)
    # The target projects to the principal point and sits on +z.
    p = cam.rotation @ (np.zeros(3) - cam.center)
    assert p[2] > 0
    np.testing.assert_allclose(p[:2], 0.0, atol=1e-12)


def test_rotation_orthonormal():
    cam = look_at_camera(
        np.array([4.0, 1.0, 2.0]), np.array([0.0, 5.0, 0.0]),
        np.array([0.0, 0.0, 1.0]), 40.0, 45.0, 20, 10,
    )
    R = cam.rotation
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(R) > 0
    assert cam.cx == (20 - 1) / 2.0 and cam.cy == (10 - 1) / 2.0


def test_bad_poses_rejected():
    bad = np.concatenate([np.eye(3) * 2.0, np.zeros((3, 1))], axis=1)
    with pytest.raises(DataError):
        Camera(fx=10, fy=10, cx=5, cy=5, width=10, height=10, world_to_cam=bad)
    mirror = np.concatenate([np.diag([1.0, 1.0, -1.0]), np.zeros((3, 1))], axis=1)
    with pytest.raises(DataError):
        Camera(fx=10, fy=10, cx=5, cy=5, width=10, height=10, world_to_cam=mirror)
    good = np.concatenate([np.eye(3), np.zeros((3, 1))], axis=1)
    with pytest.raises(DataError):
        Camera(fx=-1, fy=10, cx=5, cy=5, width=10, height=10, world_to_cam=good)


def test_degenerate_up_rejected():
    with pytest.raises(DataError):
        look_at_camera(
            np.zeros(3), np.array([0.0, 0.0, 5.0]), np.array([0.0, 0.0, 1.0]),
            10.0, 10.0, 8, 8,
        )
