"""Deterministic synthetic scenes for tests and experiments.

The scene is a desk-scale stand-in for an unbounded capture: a cluster of
small Gaussians a few units from the origin, a shell of large Gaussians
hundreds of units out in the same general direction, and a ring of inward
cameras. Ground-truth images come from the renderer itself, and the depth
maps are its expected-depth channel, so near/far masks are exact.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import geometry, sceneio
from .camera import Camera, look_at_camera
from .errors import DataError
from .render import RenderConfig, render
from .scene import GaussianSet, PointCloud, init_from_points, inverse_sigmoid, rgb_to_sh_dc
from .sh import SH_C0


@dataclass
class SyntheticSceneSpec:
    seed: int = 0
    near_count: int = 60
    near_distance: float = 5.0
    near_spread: float = 0.8
    near_scale: float = 0.1
    far_count: int = 48
    far_distance: float = 500.0
    far_cone: float = 0.15         # radians around the +x axis
    far_scale: float = 10.0
    camera_count: int = 16
    camera_radius: float = 1.5
    image_size: int = 64
    focal: float = 70.0


@dataclass
class SyntheticScene:
    spec: SyntheticSceneSpec
    gaussians: GaussianSet          # ground truth, Cartesian
    cameras: list = field(default_factory=list)
    images: list = field(default_factory=list)   # (H, W, 3) float
    depths: list = field(default_factory=list)   # (H, W) float
    near_mask: np.ndarray = None    # (N,) True for near-cluster Gaussians


def _random_quaternions(rng, n):
    q = rng.normal(size=(n, 4))
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def generate(spec: SyntheticSceneSpec) -> SyntheticScene:
    rng = np.random.default_rng(spec.seed)

    near_mu = np.array([spec.near_distance, 0.0, 0.0]) + rng.normal(
        scale=spec.near_spread, size=(spec.near_count, 3)
    )
    # Far shell: directions inside a cone around +x, radii near far_distance.
    ang = spec.far_cone * np.sqrt(rng.uniform(size=spec.far_count))
    azi = rng.uniform(0, 2 * np.pi, spec.far_count)
    dirs = np.stack(
        [np.cos(ang), np.sin(ang) * np.cos(azi), np.sin(ang) * np.sin(azi)],
        axis=-1,
    )
    far_r = spec.far_distance * rng.uniform(0.9, 1.1, spec.far_count)
    far_mu = dirs * far_r[:, None]

    mu = np.concatenate([near_mu, far_mu])
    n = mu.shape[0]
    scales = np.concatenate(
        [np.full(spec.near_count, spec.near_scale),
         np.full(spec.far_count, spec.far_scale)]
    )
    log_scale = np.log(scales[:, None] * rng.uniform(0.7, 1.4, (n, 3)))
    geom = geometry.CartesianParams(
        mu=mu, log_scale=log_scale, rot=_random_quaternions(rng, n)
    )
    colors = rng.uniform(0.1, 0.9, (n, 3))
    sh_coeffs = np.zeros((n, 16, 3))
    sh_coeffs[:, 0, :] = rgb_to_sh_dc(colors)
    gset = GaussianSet(
        geom=geom,
        opacity_raw=np.full(n, inverse_sigmoid(0.85)),
        sh_coeffs=sh_coeffs,
        active_sh_degree=0,
        max_sh_degree=3,
    )

    target = np.array([10 * spec.near_distance, 0.0, 0.0])
    cameras = []
    for i in range(spec.camera_count):
        a = 2 * np.pi * i / spec.camera_count
        pos = spec.camera_radius * np.array([0.0, np.cos(a), np.sin(a)])
        cameras.append(
            look_at_camera(pos, target, np.array([0.0, 0.0, 1.0]),
                           spec.focal, spec.focal,
                           spec.image_size, spec.image_size)
        )

    near_mask = np.arange(n) < spec.near_count
    near_only = gset.select(near_mask)
    far_only = gset.select(~near_mask)
    cfg = RenderConfig()
    images, depths = [], []
    for i, cam in enumerate(cameras):
        out = render(gset, cam, cfg)
        images.append(out.radiance)
        depths.append(out.depth_expected)
        for part, label in ((near_only, "near"), (far_only, "far")):
            if part.count and render(part, cam, cfg).alpha.max() <= 0.01:
                raise DataError(f"camera {i} sees no {label} content")
    return SyntheticScene(
        spec=spec, gaussians=gset, cameras=cameras,
        images=images, depths=depths, near_mask=near_mask,
    )


def decoded_colors(gset: GaussianSet) -> np.ndarray:
    """View-independent (DC band) color of each Gaussian, clamped to [0, 1]."""
    return np.clip(SH_C0 * gset.sh_coeffs[:, 0, :] + 0.5, 0.0, 1.0)


def perturbed_point_cloud(scene: SyntheticScene, seed: int = 1) -> PointCloud:
    """Initialization cloud with realistic structure-from-motion error.

    Near points get a small positional jitter. Far points keep their bearing
    (small angular noise) but a substantially wrong radius, the kind of depth
    error that a position step of a few scene units cannot repair.
    """
    rng = np.random.default_rng(seed)
    spec = scene.spec
    mu = scene.gaussians.positions().copy()
    near = scene.near_mask
    mu[near] += rng.normal(scale=0.5 * spec.near_scale * 3, size=(near.sum(), 3))

    far = ~near
    p = mu[far]
    r = np.linalg.norm(p, axis=-1, keepdims=True)
    d = p / r
    d = d + rng.normal(scale=0.03, size=d.shape)
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    r_noisy = r * np.exp(rng.normal(scale=0.12, size=r.shape))
    mu[far] = d * r_noisy
    return PointCloud(positions=mu, colors=decoded_colors(scene.gaussians))


def write_scene(scene: SyntheticScene, out_dir, point_cloud: PointCloud | None = None) -> str:
    """Write the scene as a manifest plus assets; returns the manifest path.

    The stored point cloud defaults to the perturbed initialization cloud.
    """
    os.makedirs(out_dir, exist_ok=True)
    pc = point_cloud if point_cloud is not None else perturbed_point_cloud(scene)
    sceneio.write_ply_points(os.path.join(out_dir, "points.ply"), pc)
    views = []
    for i, (cam, img, depth) in enumerate(
        zip(scene.cameras, scene.images, scene.depths)
    ):
        image_path = f"view_{i:03d}.png"
        depth_path = f"view_{i:03d}.pfm"
        sceneio.write_png(os.path.join(out_dir, image_path), img)
        sceneio.write_pfm(os.path.join(out_dir, depth_path), depth)
        views.append({
            "image_path": image_path,
            "depth_path": depth_path,
            "fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
            "width": cam.width, "height": cam.height,
            "rotation": [float(x) for x in cam.rotation.reshape(-1)],
            "translation": [float(x) for x in cam.translation],
        })
    manifest_path = os.path.join(out_dir, "manifest.json")
    sceneio.write_manifest(manifest_path, "points.ply", views)
    return manifest_path
