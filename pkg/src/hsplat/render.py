"""Forward rasterization: EWA-style projection, depth sort, alpha compositing."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, geometry, sh
from .camera import Camera
from .errors import DataError
from .scene import GaussianSet

# Fixed row-band granularity: results are identical for any thread count
# because bands, not threads, define the work partition.
BAND_ROWS = 16


@dataclass
class RenderConfig:
    near_clip: float = 0.01
    dilation: float = 0.3          # low-pass constant added to cov2d diagonal, px^2
    background: tuple = (0.0, 0.0, 0.0)
    alpha_ceil: float = 0.999
    skip_alpha: float = 1.0 / 255.0
    t_cutoff: float = 1e-4
    threads: int = 1
    dtype: type = np.float64


@dataclass
class Projected2D:
    mean2d: np.ndarray   # (2,)
    cov2d: np.ndarray    # (2, 2)
    depth: float
    radius: float
    valid: bool


@dataclass
class Projection:
    """Vectorized projection of N Gaussians into one view."""
    mean2d: np.ndarray   # (N, 2)
    cov2d: np.ndarray    # (N, 3) packed (a, b, c) for [[a, b], [b, c]]
    conic: np.ndarray    # (N, 3) packed inverse
    depth: np.ndarray    # (N,)
    radius: np.ndarray   # (N,)
    valid: np.ndarray    # (N,) bool
    t_cam: np.ndarray    # (N, 3) camera-space positions


def project(
    mu_world: np.ndarray, cov_world: np.ndarray, cam: Camera, cfg: RenderConfig
) -> Projection:
    W = cam.rotation
    t = mu_world @ W.T + cam.translation
    tx, ty, tz = t[:, 0], t[:, 1], t[:, 2]
    valid = np.isfinite(t).all(axis=1) & (tz > cfg.near_clip)
    safe_z = np.where(valid, tz, 1.0)
    inv_z = 1.0 / safe_z
    mean2d = np.stack(
        [cam.fx * tx * inv_z + cam.cx, cam.fy * ty * inv_z + cam.cy], axis=-1
    )
    J = np.zeros((mu_world.shape[0], 2, 3), dtype=mu_world.dtype)
    J[:, 0, 0] = cam.fx * inv_z
    J[:, 0, 2] = -cam.fx * tx * inv_z * inv_z
    J[:, 1, 1] = cam.fy * inv_z
    J[:, 1, 2] = -cam.fy * ty * inv_z * inv_z
    V = np.einsum("ij,njk,lk->nil", W, cov_world, W)
    c2 = np.einsum("nij,njk,nlk->nil", J, V, J)
    a = c2[:, 0, 0] + cfg.dilation
    b = c2[:, 0, 1]
    c = c2[:, 1, 1] + cfg.dilation
    det = a * c - b * b
    valid &= det > 1e-12
    safe_det = np.where(det > 1e-12, det, 1.0)
    conic = np.stack([c / safe_det, -b / safe_det, a / safe_det], axis=-1)
    mid = 0.5 * (a + c)
    eig_max = mid + np.sqrt(0.25 * (a - c) ** 2 + b * b)
    radius = 3.0 * np.sqrt(np.maximum(eig_max, 0.0))
    valid &= radius > 0
    return Projection(
        mean2d=mean2d,
        cov2d=np.stack([a, b, c], axis=-1),
        conic=conic,
        depth=tz.copy(),
        radius=radius,
        valid=valid,
        t_cam=t,
    )


def project_gaussian(
    mu_world: np.ndarray, cov_world: np.ndarray, cam: Camera, cfg: RenderConfig | None = None
) -> Projected2D:
    """Single-Gaussian projection; see `project` for the batched form."""
    cfg = cfg or RenderConfig()
    p = project(
        np.asarray(mu_world, dtype=np.float64)[None, :],
        np.asarray(cov_world, dtype=np.float64)[None, :, :],
        cam,
        cfg,
    )
    a, b, c = p.cov2d[0]
    return Projected2D(
        mean2d=p.mean2d[0],
        cov2d=np.array([[a, b], [b, c]]),
        depth=float(p.depth[0]),
        radius=float(p.radius[0]),
        valid=bool(p.valid[0]),
    )


@dataclass
class _RenderCache:
    """Everything the backward pass needs, saved at forward time."""
    order: np.ndarray        # (M,) original indices, depth-sorted
    mean2d: np.ndarray       # (M, 2)
    conic: np.ndarray        # (M, 3)
    cov2d: np.ndarray        # (M, 3)
    colors: np.ndarray       # (M, 3)
    opac: np.ndarray         # (M,)
    depth: np.ndarray        # (M,)
    radius: np.ndarray       # (M,)
    t_cam: np.ndarray        # (M, 3)
    sh_basis: np.ndarray     # (M, K)
    dcolor_ddir: np.ndarray  # (M, 3, 3)
    clamp_mask: np.ndarray   # (M, 3)
    view_dirs: np.ndarray    # (M, 3)
    view_dist: np.ndarray    # (M,)
    t_final: np.ndarray      # (H, W)
    last_contrib: np.ndarray  # (H, W) int64
    cfg: RenderConfig = None
    cam: Camera = None


@dataclass
class RenderOutput:
    radiance: np.ndarray        # (H, W, 3)
    alpha: np.ndarray           # (H, W)
    depth_expected: np.ndarray  # (H, W)
    per_gaussian_screen_grad_norm: np.ndarray | None = None
    cache: _RenderCache | None = None


def _band_ranges(height: int):
    return [(r, min(r + BAND_ROWS, height)) for r in range(0, height, BAND_ROWS)]


def render(gset: GaussianSet, cam: Camera, cfg: RenderConfig | None = None) -> RenderOutput:
    cfg = cfg or RenderConfig()
    dtype = np.dtype(cfg.dtype)
    H, W = cam.height, cam.width
    bg = np.asarray(cfg.background, dtype=dtype)

    if gset.count == 0:
        radiance = np.broadcast_to(bg, (H, W, 3)).copy()
        return RenderOutput(
            radiance=radiance,
            alpha=np.zeros((H, W), dtype=dtype),
            depth_expected=np.zeros((H, W), dtype=dtype),
        )

    finite = geometry.valid_mask(gset.geom)
    mu = gset.positions().astype(dtype)
    cov = gset.covariances().astype(dtype)
    proj = project(mu, cov, cam, cfg)
    visible = proj.valid & finite

    cam_center = cam.center.astype(dtype)
    offs = mu - cam_center
    dist = np.linalg.norm(offs, axis=-1)
    dist_safe = np.maximum(dist, 1e-12)
    dirs = offs / dist_safe[:, None]
    colors, basis, dcol_ddir, clamp_mask = sh.eval_sh_color_with_grads(
        gset.sh_coeffs.astype(dtype), dirs, gset.active_sh_degree
    )
    opac = gset.opacities().astype(dtype)

    idx = np.flatnonzero(visible)
    order = idx[np.argsort(proj.depth[idx], kind="stable")]

    s_mean2d = np.ascontiguousarray(proj.mean2d[order])
    s_conic = np.ascontiguousarray(proj.conic[order])
    s_color = np.ascontiguousarray(colors[order])
    s_opac = np.ascontiguousarray(opac[order])
    s_depth = np.ascontiguousarray(proj.depth[order])
    s_radius = np.ascontiguousarray(proj.radius[order])

    out_color = np.empty((H, W, 3), dtype=dtype)
    out_t = np.empty((H, W), dtype=dtype)
    out_depth = np.empty((H, W), dtype=dtype)
    last_contrib = np.empty((H, W), dtype=np.int64)

    def run_band(band):
        r0, r1 = band
        _kernels.composite_forward(
            s_mean2d, s_conic, s_color, s_opac, s_depth, s_radius,
            r0, r1, W,
            dtype.type(cfg.alpha_ceil), dtype.type(cfg.skip_alpha), dtype.type(cfg.t_cutoff),
            out_color[r0:r1], out_t[r0:r1], out_depth[r0:r1], last_contrib[r0:r1],
        )

    bands = _band_ranges(H)
    if cfg.threads > 1 and len(bands) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            list(pool.map(run_band, bands))
    else:
        for band in bands:
            run_band(band)

    alpha = 1.0 - out_t
    radiance = out_color + out_t[:, :, None] * bg
    depth_expected = out_depth / np.maximum(alpha, 1e-6)

    cache = _RenderCache(
        order=order,
        mean2d=s_mean2d,
        conic=s_conic,
        cov2d=np.ascontiguousarray(proj.cov2d[order]),
        colors=s_color,
        opac=s_opac,
        depth=s_depth,
        radius=s_radius,
        t_cam=np.ascontiguousarray(proj.t_cam[order]),
        sh_basis=np.ascontiguousarray(basis[order]),
        dcolor_ddir=np.ascontiguousarray(dcol_ddir[order]),
        clamp_mask=np.ascontiguousarray(clamp_mask[order]),
        view_dirs=np.ascontiguousarray(dirs[order]),
        view_dist=np.ascontiguousarray(dist_safe[order]),
        t_final=out_t,
        last_contrib=last_contrib,
        cfg=cfg,
        cam=cam,
    )
    return RenderOutput(
        radiance=radiance, alpha=alpha, depth_expected=depth_expected, cache=cache
    )
