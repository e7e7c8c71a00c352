"""Pinhole camera: intrinsics plus rigid world-to-camera pose."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    world_to_cam: np.ndarray  # (3, 4), [R | t]

    def __post_init__(self):
        self.world_to_cam = np.asarray(self.world_to_cam, dtype=np.float64)
        if self.world_to_cam.shape != (3, 4):
            raise DataError(f"world_to_cam must be 3x4, got {self.world_to_cam.shape}")
        if self.fx <= 0 or self.fy <= 0:
            raise DataError("focal lengths must be positive")
        R = self.world_to_cam[:, :3]
        err = np.abs(R @ R.T - np.eye(3)).max()
        if err > 1e-9 or np.linalg.det(R) < 0:
            raise DataError(f"rotation block is not orthonormal (max error {err:.2e})")

    @property
    def rotation(self) -> np.ndarray:
        return self.world_to_cam[:, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.world_to_cam[:, 3]

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation


def look_at_camera(
    position: np.ndarray,
    target: np.ndarray,
    up: np.ndarray,
    fx: float,
    fy: float,
    width: int,
    height: int,
) -> Camera:
    """Camera at `position` looking toward `target`, +z forward in camera frame."""
    position = np.asarray(position, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - position
    forward = forward / np.linalg.norm(forward)
    up = np.asarray(up, dtype=np.float64)
    right = np.cross(forward, up)
    nr = np.linalg.norm(right)
    if nr < 1e-12:
        raise DataError("look direction is parallel to the up vector")
    right /= nr
    down = np.cross(forward, right)
    R = np.stack([right, down, forward], axis=0)
    t = -R @ position
    return Camera(
        fx=fx, fy=fy, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
        width=width, height=height,
        world_to_cam=np.concatenate([R, t[:, None]], axis=1),
    )
