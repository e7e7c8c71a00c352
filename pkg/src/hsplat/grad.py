"""Reverse-mode gradients of image-space losses w.r.t. raw Gaussian parameters.

`backward` chains analytically through compositing, projection and the
parametrization activations; `finite_diff_gradients` is the independent
central-difference oracle used to verify it.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels, geometry
from .camera import Camera
from .errors import DataError
from .render import RenderConfig, RenderOutput, _band_ranges, render
from .scene import GaussianSet


@dataclass
class GradientBuffer:
    arrays: dict[str, np.ndarray]       # mirrors GaussianSet.param_arrays()
    screen_grad_norm: np.ndarray        # (N,) |dL/dmean2d| per Gaussian

    def __getitem__(self, key: str) -> np.ndarray:
        return self.arrays[key]


def zeros_like_set(gset: GaussianSet) -> GradientBuffer:
    return GradientBuffer(
        arrays={k: np.zeros_like(v) for k, v in gset.param_arrays().items()},
        screen_grad_norm=np.zeros(gset.count),
    )


def backward(
    gset: GaussianSet,
    cam: Camera,
    render_out: RenderOutput,
    dL_dradiance: np.ndarray,
) -> GradientBuffer:
    cache = render_out.cache
    if cache is None:
        # Nothing was rendered (empty set); all gradients vanish.
        return zeros_like_set(gset)
    if dL_dradiance.shape != render_out.radiance.shape:
        raise DataError(
            f"dL_dradiance shape {dL_dradiance.shape} does not match the "
            f"rendered image {render_out.radiance.shape}"
        )
    cfg = cache.cfg
    dtype = np.dtype(cfg.dtype)
    H, W = cam.height, cam.width
    m = cache.order.shape[0]
    bg = np.asarray(cfg.background, dtype=dtype)
    dl_dc = np.ascontiguousarray(dL_dradiance.astype(dtype))

    bands = _band_ranges(H)
    partials = []

    def run_band(band):
        r0, r1 = band
        d_mean2d = np.zeros((m, 2), dtype=dtype)
        d_conic = np.zeros((m, 3), dtype=dtype)
        d_opac = np.zeros(m, dtype=dtype)
        d_color = np.zeros((m, 3), dtype=dtype)
        _kernels.composite_backward(
            cache.mean2d, cache.conic, cache.colors, cache.opac,
            cache.depth, cache.radius,
            r0, r1, W,
            dtype.type(cfg.alpha_ceil), dtype.type(cfg.skip_alpha), dtype.type(cfg.t_cutoff),
            cache.t_final[r0:r1], cache.last_contrib[r0:r1],
            dl_dc[r0:r1], bg,
            d_mean2d, d_conic, d_opac, d_color,
        )
        return d_mean2d, d_conic, d_opac, d_color

    if cfg.threads > 1 and len(bands) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            partials = list(pool.map(run_band, bands))
    else:
        partials = [run_band(b) for b in bands]

    # Merge per-band buffers in band order: deterministic float sums.
    d_mean2d = partials[0][0]
    d_conic = partials[0][1]
    d_opac = partials[0][2]
    d_color = partials[0][3]
    for p in partials[1:]:
        d_mean2d += p[0]
        d_conic += p[1]
        d_opac += p[2]
        d_color += p[3]

    # --- color chain: SH coefficients and view-direction dependence -------
    masked_dc = d_color * cache.clamp_mask
    K = cache.sh_basis.shape[1]
    d_sh = np.einsum("mk,mc->mkc", cache.sh_basis, masked_dc)
    d_dir = np.einsum("mc,mcd->md", masked_dc, cache.dcolor_ddir)
    dirs = cache.view_dirs
    d_mu_color = (d_dir - dirs * np.sum(d_dir * dirs, axis=-1, keepdims=True)) / cache.view_dist[:, None]

    # --- conic -> cov2d ---------------------------------------------------
    a = cache.cov2d[:, 0]
    b = cache.cov2d[:, 1]
    c = cache.cov2d[:, 2]
    Cmat = np.empty((m, 2, 2), dtype=dtype)
    Cmat[:, 0, 0] = a
    Cmat[:, 0, 1] = b
    Cmat[:, 1, 0] = b
    Cmat[:, 1, 1] = c
    Kmat = np.empty_like(Cmat)
    Kmat[:, 0, 0] = cache.conic[:, 0]
    Kmat[:, 0, 1] = cache.conic[:, 1]
    Kmat[:, 1, 0] = cache.conic[:, 1]
    Kmat[:, 1, 1] = cache.conic[:, 2]
    Gk = np.empty_like(Cmat)
    Gk[:, 0, 0] = d_conic[:, 0]
    Gk[:, 0, 1] = 0.5 * d_conic[:, 1]
    Gk[:, 1, 0] = 0.5 * d_conic[:, 1]
    Gk[:, 1, 1] = d_conic[:, 2]
    U = -Kmat @ Gk @ Kmat  # dL/dcov2d as a full symmetric matrix

    # --- cov2d and mean2d -> camera-space position and world covariance ---
    Wrot = cam.rotation.astype(dtype)
    t = cache.t_cam
    tx, ty, tz = t[:, 0], t[:, 1], t[:, 2]
    inv_z = 1.0 / tz
    J = np.zeros((m, 2, 3), dtype=dtype)
    J[:, 0, 0] = cam.fx * inv_z
    J[:, 0, 2] = -cam.fx * tx * inv_z**2
    J[:, 1, 1] = cam.fy * inv_z
    J[:, 1, 2] = -cam.fy * ty * inv_z**2

    cov_world = geometry.decode_covariance(gset.geom)[cache.order].astype(dtype)
    V = np.einsum("ij,njk,lk->nil", Wrot, cov_world, Wrot)

    dV = np.einsum("nji,njk,nkl->nil", J, U, J)
    dSigma = np.einsum("ji,njk,kl->nil", Wrot, dV, Wrot)

    # J depends on t: accumulate through both cov2d and mean2d.
    dJ = np.zeros((m, 3, 2, 3), dtype=dtype)
    dJ[:, 0, 0, 2] = -cam.fx * inv_z**2
    dJ[:, 1, 1, 2] = -cam.fy * inv_z**2
    dJ[:, 2, 0, 0] = -cam.fx * inv_z**2
    dJ[:, 2, 0, 2] = 2.0 * cam.fx * tx * inv_z**3
    dJ[:, 2, 1, 1] = -cam.fy * inv_z**2
    dJ[:, 2, 1, 2] = 2.0 * cam.fy * ty * inv_z**3
    dt = 2.0 * np.einsum("nij,nkia,nab,njb->nk", U, dJ, V, J)
    dt += np.einsum("nij,ni->nj", J, d_mean2d)
    d_mu = dt @ Wrot + d_mu_color

    # --- world covariance -> decoded scale and raw quaternion -------------
    sub_geom = geometry.select_params(gset.geom, cache.order)
    d_scale, d_q = geometry.covariance_backward(sub_geom, dSigma.astype(np.float64))
    raw = geometry.position_scale_backward(
        sub_geom, d_mu.astype(np.float64), d_scale
    )

    buf = zeros_like_set(gset)
    for name, g in raw.items():
        buf.arrays[name][cache.order] = g
    buf.arrays["rot"][cache.order] = d_q
    buf.arrays["opacity_raw"][cache.order] = d_opac * cache.opac * (1.0 - cache.opac)
    buf.arrays["sh_coeffs"][cache.order, :K, :] = d_sh
    buf.screen_grad_norm[cache.order] = np.linalg.norm(d_mean2d, axis=-1)

    for name, g in buf.arrays.items():
        if not np.isfinite(g).all():
            raise DataError(f"non-finite gradient in {name}")
    return buf


def finite_diff_gradients(
    gset: GaussianSet, loss_fn, h: float = 1e-4
) -> GradientBuffer:
    """Central differences of `loss_fn(gset)` for every scalar raw parameter."""
    buf = zeros_like_set(gset)
    for name, arr in gset.param_arrays().items():
        grad = buf.arrays[name]
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = loss_fn(gset)
            flat[i] = orig - h
            lm = loss_fn(gset)
            flat[i] = orig
            gflat[i] = (lp - lm) / (2.0 * h)
    return buf


def render_loss_fn(cam: Camera, weights: np.ndarray, cfg: RenderConfig | None = None):
    """Loss L = sum(weights * radiance) as a closure over a fixed view.

    The matching analytic gradient is backward(..., dL_dradiance=weights).
    """
    def fn(gset: GaussianSet) -> float:
        out = render(gset, cam, cfg)
        return float(np.sum(weights * out.radiance))
    return fn
