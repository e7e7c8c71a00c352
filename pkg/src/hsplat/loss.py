"""Photometric loss (L1 + D-SSIM) with analytic gradients, plus PSNR.

SSIM follows the reference recipe: 11x11 Gaussian window (sigma 1.5),
C1 = 0.01^2, C2 = 0.03^2, local statistics from 'same' zero-padded
convolutions, averaged over all pixels and channels.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2

PSNR_CAP_DB = 100.0


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    w = np.exp(-(x**2) / (2 * sigma**2))
    return w / w.sum()


def _conv_same_1d(img: np.ndarray, w: np.ndarray, axis: int) -> np.ndarray:
    pad = len(w) // 2
    widths = [(0, 0)] * img.ndim
    widths[axis] = (pad, pad)
    padded = np.pad(img, widths, mode="constant")
    return np.apply_along_axis(lambda v: np.convolve(v, w, mode="valid"), axis, padded)


def filter2d(img: np.ndarray, w: np.ndarray | None = None) -> np.ndarray:
    """Separable 'same' zero-padded Gaussian filtering over the first two axes."""
    w = gaussian_window() if w is None else w
    return _conv_same_1d(_conv_same_1d(img, w, 0), w, 1)


def ssim_map(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Per-pixel, per-channel SSIM map; inputs (H, W, C) or (H, W) in [0, 1]."""
    if pred.shape != gt.shape:
        raise DataError(f"shape mismatch {pred.shape} vs {gt.shape}")
    x = pred[..., None] if pred.ndim == 2 else pred
    y = gt[..., None] if gt.ndim == 2 else gt
    mu_x = filter2d(x)
    mu_y = filter2d(y)
    var_x = filter2d(x * x) - mu_x**2
    var_y = filter2d(y * y) - mu_y**2
    cov = filter2d(x * y) - mu_x * mu_y
    a1 = 2 * mu_x * mu_y + SSIM_C1
    a2 = 2 * cov + SSIM_C2
    b1 = mu_x**2 + mu_y**2 + SSIM_C1
    b2 = var_x + var_y + SSIM_C2
    m = (a1 * a2) / (b1 * b2)
    return m[..., 0] if pred.ndim == 2 else m


def ssim(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Mean SSIM; with a boolean (H, W) mask, averages the map over mask pixels."""
    m = ssim_map(pred, gt)
    if mask is None:
        return float(m.mean())
    if mask.shape != m.shape[:2]:
        raise DataError("mask must match image height and width")
    if not mask.any():
        raise DataError("ssim mask selects no pixels")
    return float(m[mask].mean()) if m.ndim == 2 else float(m[mask, :].mean())


def ssim_with_grad(pred: np.ndarray, gt: np.ndarray):
    """(mean SSIM, d(mean SSIM)/d pred). Inputs (H, W, C) in [0, 1]."""
    x, y = pred, gt
    mu_x = filter2d(x)
    mu_y = filter2d(y)
    wxx = filter2d(x * x)
    wxy = filter2d(x * y)
    wyy = filter2d(y * y)
    var_x = wxx - mu_x**2
    var_y = wyy - mu_y**2
    cov = wxy - mu_x * mu_y
    a1 = 2 * mu_x * mu_y + SSIM_C1
    a2 = 2 * cov + SSIM_C2
    b1 = mu_x**2 + mu_y**2 + SSIM_C1
    b2 = var_x + var_y + SSIM_C2
    denom = b1 * b2
    s = (a1 * a2) / denom

    # Partials of the map w.r.t. the local statistics.
    ds_da1 = a2 / denom
    ds_da2 = a1 / denom
    ds_db1 = -s / b1
    ds_db2 = -s / b2
    ds_dvx = ds_db2
    ds_dcov = 2 * ds_da2
    # mu_x enters directly and through var_x and cov.
    g_mu = 2 * mu_y * ds_da1 + 2 * mu_x * ds_db1 - 2 * mu_x * ds_dvx - mu_y * ds_dcov
    # wxx and wxy enter with unit coefficient through var_x and cov.
    g_wxx = ds_dvx
    g_wxy = ds_dcov

    n = s.size
    # Adjoint of the symmetric 'same' convolution is the same convolution.
    grad = (filter2d(g_mu) + 2 * x * filter2d(g_wxx) + y * filter2d(g_wxy)) / n
    return float(s.mean()), grad


def photometric_loss(pred: np.ndarray, gt: np.ndarray, lambda_dssim: float = 0.2):
    """(1-l)*mean|pred-gt| + l*(1-SSIM); returns (loss, dloss/dpred)."""
    if pred.shape != gt.shape:
        raise DataError(f"shape mismatch {pred.shape} vs {gt.shape}")
    diff = pred - gt
    l1 = np.abs(diff).mean()
    grad_l1 = np.sign(diff) / diff.size
    s, grad_s = ssim_with_grad(pred, gt)
    loss = (1.0 - lambda_dssim) * l1 + lambda_dssim * (1.0 - s)
    grad = (1.0 - lambda_dssim) * grad_l1 - lambda_dssim * grad_s
    return float(loss), grad


def psnr(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray | None = None) -> float:
    """10*log10(1/MSE) for [0, 1] images; identical images report the cap."""
    if pred.shape != gt.shape:
        raise DataError(f"shape mismatch {pred.shape} vs {gt.shape}")
    if mask is not None:
        if mask.shape != pred.shape[:2]:
            raise DataError("mask must match image height and width")
        if not mask.any():
            raise DataError("psnr mask selects no pixels")
        pred = pred[mask]
        gt = gt[mask]
    mse = float(np.mean((pred - gt) ** 2))
    if mse <= 0.0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP_DB)
