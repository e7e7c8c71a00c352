"""Real spherical-harmonics color evaluation (3DGS polynomial convention).

Basis ordering is degree-major, m = -l..l inside each degree, 16 functions for
max degree 3. Colors are coeff . basis + 0.5, clamped to [0, 1].
"""

from __future__ import annotations

import numpy as np

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
SH_C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)


def num_coeffs(degree: int) -> int:
    return (degree + 1) ** 2


def sh_basis(dirs: np.ndarray, degree: int) -> np.ndarray:
    """Basis values for unit directions (N, 3) -> (N, (degree+1)^2)."""
    x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    out = np.empty((dirs.shape[0], num_coeffs(degree)), dtype=dirs.dtype)
    out[:, 0] = SH_C0
    if degree >= 1:
        out[:, 1] = -SH_C1 * y
        out[:, 2] = SH_C1 * z
        out[:, 3] = -SH_C1 * x
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        out[:, 4] = SH_C2[0] * x * y
        out[:, 5] = SH_C2[1] * y * z
        out[:, 6] = SH_C2[2] * (2 * zz - xx - yy)
        out[:, 7] = SH_C2[3] * x * z
        out[:, 8] = SH_C2[4] * (xx - yy)
    if degree >= 3:
        xx, yy, zz = x * x, y * y, z * z
        out[:, 9] = SH_C3[0] * y * (3 * xx - yy)
        out[:, 10] = SH_C3[1] * x * y * z
        out[:, 11] = SH_C3[2] * y * (4 * zz - xx - yy)
        out[:, 12] = SH_C3[3] * z * (2 * zz - 3 * xx - 3 * yy)
        out[:, 13] = SH_C3[4] * x * (4 * zz - xx - yy)
        out[:, 14] = SH_C3[5] * z * (xx - yy)
        out[:, 15] = SH_C3[6] * x * (xx - 3 * yy)
    return out


def sh_basis_grad(dirs: np.ndarray, degree: int) -> np.ndarray:
    """d(basis_k)/d(dir) for unit directions, shape (N, K, 3)."""
    x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    zero = np.zeros_like(x)
    K = num_coeffs(degree)
    g = np.zeros((dirs.shape[0], K, 3), dtype=dirs.dtype)
    if degree >= 1:
        g[:, 1] = np.stack([zero, -SH_C1 + zero, zero], axis=-1)
        g[:, 2] = np.stack([zero, zero, SH_C1 + zero], axis=-1)
        g[:, 3] = np.stack([-SH_C1 + zero, zero, zero], axis=-1)
    if degree >= 2:
        g[:, 4] = SH_C2[0] * np.stack([y, x, zero], axis=-1)
        g[:, 5] = SH_C2[1] * np.stack([zero, z, y], axis=-1)
        g[:, 6] = SH_C2[2] * np.stack([-2 * x, -2 * y, 4 * z], axis=-1)
        g[:, 7] = SH_C2[3] * np.stack([z, zero, x], axis=-1)
        g[:, 8] = SH_C2[4] * np.stack([2 * x, -2 * y, zero], axis=-1)
    if degree >= 3:
        xx, yy, zz = x * x, y * y, z * z
        g[:, 9] = SH_C3[0] * np.stack([6 * x * y, 3 * xx - 3 * yy, zero], axis=-1)
        g[:, 10] = SH_C3[1] * np.stack([y * z, x * z, x * y], axis=-1)
        g[:, 11] = SH_C3[2] * np.stack(
            [-2 * x * y, 4 * zz - xx - 3 * yy, 8 * y * z], axis=-1
        )
        g[:, 12] = SH_C3[3] * np.stack(
            [-6 * x * z, -6 * y * z, 6 * zz - 3 * xx - 3 * yy], axis=-1
        )
        g[:, 13] = SH_C3[4] * np.stack(
            [4 * zz - 3 * xx - yy, -2 * x * y, 8 * x * z], axis=-1
        )
        g[:, 14] = SH_C3[5] * np.stack([2 * x * z, -2 * y * z, xx - yy], axis=-1)
        g[:, 15] = SH_C3[6] * np.stack([3 * xx - 3 * yy, -6 * x * y, zero], axis=-1)
    return g


def eval_sh_color(coeffs: np.ndarray, dirs: np.ndarray, degree: int) -> np.ndarray:
    """Clamped RGB for coeffs (N, K, 3) and unit view directions (N, 3)."""
    K = num_coeffs(degree)
    basis = sh_basis(dirs, degree)
    raw = np.einsum("nk,nkc->nc", basis, coeffs[:, :K, :]) + 0.5
    return np.clip(raw, 0.0, 1.0)


def eval_sh_color_with_grads(coeffs: np.ndarray, dirs: np.ndarray, degree: int):
    """Color plus quantities needed by the backward pass.

    Returns (color (N,3), basis (N,K), dcolor_ddir (N,3,3), unclamped_mask (N,3)).
    dcolor_ddir[:, c, :] is the gradient of channel c w.r.t. the direction,
    before the clamp mask is applied.
    """
    K = num_coeffs(degree)
    basis = sh_basis(dirs, degree)
    raw = np.einsum("nk,nkc->nc", basis, coeffs[:, :K, :]) + 0.5
    color = np.clip(raw, 0.0, 1.0)
    mask = (raw > 0.0) & (raw < 1.0)
    bgrad = sh_basis_grad(dirs, degree)
    dcolor_ddir = np.einsum("nkc,nkd->ncd", coeffs[:, :K, :], bgrad)
    return color, basis, dcolor_ddir, mask
