"""Coordinate parametrizations and conversions to world-space Gaussian attributes.

Three parametrizations are supported:

* Cartesian: position stored directly, per-axis scales in log space.
* Homogeneous: position and scales stored as projective quantities sharing a
  single weight w = exp(rho); decoding divides both by w.
* Inverted spherical: direction as (theta, phi) angles plus an inverted depth
  w' = exp(raw), with radius r = 1/w'.

All functions are vectorized over the leading axis and pure; quaternions are
stored unnormalized and renormalized at decode time.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from enum import Enum

import numpy as np

from .errors import DataError

# Largest inverted depth we keep representable; clamping here keeps very near
# points finite instead of rejecting them.
_INV_DEPTH_MAX = 1e12


class Parametrization(Enum):
    CARTESIAN = "cartesian"
    HOMOGENEOUS = "homogeneous"
    INVERTED_SPHERICAL = "inverted-spherical"

    @classmethod
    def from_string(cls, name: str) -> "Parametrization":
        for p in cls:
            if p.value == name:
                return p
        raise DataError(
            f"unknown parametrization {name!r}; expected one of "
            f"{[p.value for p in cls]}"
        )


@dataclass
class CartesianParams:
    mu: np.ndarray        # (N, 3) world position
    log_scale: np.ndarray  # (N, 3)
    rot: np.ndarray       # (N, 4) quaternion (w, x, y, z), unnormalized

    parametrization = Parametrization.CARTESIAN


@dataclass
class HomogeneousParams:
    mu_tilde: np.ndarray        # (N, 3)
    log_scale_tilde: np.ndarray  # (N, 3)
    rot: np.ndarray             # (N, 4)
    rho: np.ndarray             # (N,) raw weight, w = exp(rho)

    parametrization = Parametrization.HOMOGENEOUS


@dataclass
class InvertedSphericalParams:
    theta: np.ndarray          # (N,) azimuth
    phi: np.ndarray            # (N,) polar angle from +z
    log_inv_depth: np.ndarray  # (N,) raw, w' = exp(raw), r = 1/w'
    log_scale: np.ndarray      # (N, 3)
    rot: np.ndarray            # (N, 4)

    parametrization = Parametrization.INVERTED_SPHERICAL


GeomParams = CartesianParams | HomogeneousParams | InvertedSphericalParams


def copy_params(params: GeomParams) -> GeomParams:
    return type(params)(**{f.name: getattr(params, f.name).copy() for f in fields(params)})


def concat_params(a: GeomParams, b: GeomParams) -> GeomParams:
    if type(a) is not type(b):
        raise DataError("cannot concatenate params of different parametrizations")
    return type(a)(
        **{
            f.name: np.concatenate([getattr(a, f.name), getattr(b, f.name)], axis=0)
            for f in fields(a)
        }
    )


def select_params(params: GeomParams, idx) -> GeomParams:
    return type(params)(**{f.name: getattr(params, f.name)[idx] for f in fields(params)})


def num_gaussians(params: GeomParams) -> int:
    return getattr(params, fields(params)[0].name).shape[0]


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    """Unit rotation matrices from (possibly unnormalized) quaternions (N, 4)."""
    q = np.asarray(q, dtype=np.float64) if q.dtype.kind != "f" else q
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise DataError("zero quaternion cannot be normalized")
    w, x, y, z = np.moveaxis(q / norm, -1, 0)
    R = np.empty(q.shape[:-1] + (3, 3), dtype=q.dtype)
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def decode_position(params: GeomParams) -> np.ndarray:
    """World-space Cartesian means, shape (N, 3)."""
    if isinstance(params, CartesianParams):
        return params.mu.copy()
    if isinstance(params, HomogeneousParams):
        return params.mu_tilde * np.exp(-params.rho)[:, None]
    inv_depth = np.exp(params.log_inv_depth)
    r = 1.0 / inv_depth
    sin_phi = np.sin(params.phi)
    return np.stack(
        [
            sin_phi * np.cos(params.theta) * r,
            sin_phi * np.sin(params.theta) * r,
            np.cos(params.phi) * r,
        ],
        axis=-1,
    )


def decode_scale(params: GeomParams) -> np.ndarray:
    """Activated per-axis scales, shape (N, 3); always positive."""
    if isinstance(params, HomogeneousParams):
        return np.exp(params.log_scale_tilde - params.rho[:, None])
    return np.exp(params.log_scale)


def decode_covariance(params: GeomParams) -> np.ndarray:
    """World covariances R S S^T R^T, shape (N, 3, 3)."""
    R = quat_to_rotmat(params.rot)
    s = decode_scale(params)
    M = R * s[:, None, :]
    return M @ np.swapaxes(M, -1, -2)


def valid_mask(params: GeomParams) -> np.ndarray:
    """Finite decode check; invalid Gaussians are excluded from rendering."""
    pos = decode_position(params)
    scale = decode_scale(params)
    ok = np.isfinite(pos).all(axis=-1) & np.isfinite(scale).all(axis=-1)
    ok &= np.linalg.norm(params.rot, axis=-1) > 0
    return ok


def encode_from_cartesian(
    mu: np.ndarray,
    s: np.ndarray,
    q: np.ndarray,
    parametrization: Parametrization,
    w_hint: np.ndarray | float | None = None,
) -> GeomParams:
    """Build raw params that decode back to (mu, s, q up to quaternion sign)."""
    mu = np.atleast_2d(np.asarray(mu, dtype=np.float64))
    s = np.atleast_2d(np.asarray(s, dtype=np.float64))
    q = np.atleast_2d(np.asarray(q, dtype=np.float64))
    if np.any(s <= 0):
        raise DataError("scales must be positive")
    if parametrization is Parametrization.CARTESIAN:
        return CartesianParams(mu=mu.copy(), log_scale=np.log(s), rot=q.copy())
    if parametrization is Parametrization.HOMOGENEOUS:
        if w_hint is None:
            d = np.linalg.norm(mu, axis=-1)
            w = np.where(d > 1e-12, 1.0 / np.maximum(d, 1e-12), 1.0)
        else:
            w = np.broadcast_to(np.asarray(w_hint, dtype=np.float64), mu.shape[:1]).copy()
            if np.any(w <= 0):
                raise DataError("w_hint must be positive")
        return HomogeneousParams(
            mu_tilde=mu * w[:, None],
            log_scale_tilde=np.log(s) + np.log(w)[:, None],
            rot=q.copy(),
            rho=np.log(w),
        )
    r = np.linalg.norm(mu, axis=-1)
    if np.any(r == 0):
        raise DataError("inverted-spherical encoding is undefined at the origin")
    inv_depth = np.minimum(1.0 / r, _INV_DEPTH_MAX)
    theta = np.arctan2(mu[:, 1], mu[:, 0])
    phi = np.arccos(np.clip(mu[:, 2] / r, -1.0, 1.0))
    return InvertedSphericalParams(
        theta=theta,
        phi=phi,
        log_inv_depth=np.log(inv_depth),
        log_scale=np.log(s),
        rot=q.copy(),
    )


def rescale_homogeneous(params: HomogeneousParams, k: float) -> HomogeneousParams:
    """Move along the projective equivalence class; decoded quantities unchanged."""
    if not isinstance(params, HomogeneousParams):
        raise DataError("rescale_homogeneous requires homogeneous params")
    if k <= 0:
        raise DataError(f"rescale factor must be positive, got {k}")
    ln_k = np.log(k)
    return HomogeneousParams(
        mu_tilde=params.mu_tilde * k,
        log_scale_tilde=params.log_scale_tilde + ln_k,
        rot=params.rot.copy(),
        rho=params.rho + ln_k,
    )


# ---------------------------------------------------------------------------
# Backward chains: world-space gradients -> raw-parameter gradients.


def rotmat_backward(q: np.ndarray, dL_dR: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the raw (unnormalized) quaternion, given dL/dR (N,3,3)."""
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    n = q / norm
    w, x, y, z = np.moveaxis(n, -1, 0)
    zero = np.zeros_like(w)

    def mat(rows):
        return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)

    dR_dw = 2 * mat([[zero, -z, y], [z, zero, -x], [-y, x, zero]])
    dR_dx = 2 * mat([[zero, y, z], [y, -2 * x, -w], [z, w, -2 * x]])
    dR_dy = 2 * mat([[-2 * y, x, w], [x, zero, z], [-w, z, -2 * y]])
    dR_dz = 2 * mat([[-2 * z, -w, x], [w, -2 * z, y], [x, y, zero]])
    dL_dn = np.stack(
        [np.sum(dL_dR * d, axis=(-1, -2)) for d in (dR_dw, dR_dx, dR_dy, dR_dz)],
        axis=-1,
    )
    # Through normalization: dn/dq_raw = (I - n n^T) / |q|.
    proj = dL_dn - n * np.sum(dL_dn * n, axis=-1, keepdims=True)
    return proj / norm


def covariance_backward(params: GeomParams, dL_dSigma: np.ndarray):
    """Split dL/dSigma into gradients on decoded scales and the raw quaternion.

    Returns (dL_dscale_decoded (N,3), dL_dq_raw (N,4)).
    """
    R = quat_to_rotmat(params.rot)
    s = decode_scale(params)
    M = R * s[:, None, :]
    sym = dL_dSigma + np.swapaxes(dL_dSigma, -1, -2)
    dL_dM = sym @ M
    dL_dR = dL_dM * s[:, None, :]
    dL_ds = np.einsum("nij,nij->nj", R, dL_dM)
    dL_dq = rotmat_backward(params.rot, dL_dR)
    return dL_ds, dL_dq


def position_scale_backward(
    params: GeomParams, dL_dmu: np.ndarray, dL_ds: np.ndarray
) -> dict[str, np.ndarray]:
    """Chain decoded position/scale gradients to the raw parameter arrays.

    Returns a dict keyed by raw field name (quaternion excluded; that chain
    lives in covariance_backward).
    """
    if isinstance(params, CartesianParams):
        return {
            "mu": dL_dmu.copy(),
            "log_scale": dL_ds * decode_scale(params),
        }
    if isinstance(params, HomogeneousParams):
        inv_w = np.exp(-params.rho)
        s = decode_scale(params)
        d_mu_tilde = dL_dmu * inv_w[:, None]
        d_log_scale_tilde = dL_ds * s
        d_rho = -np.sum(dL_dmu * params.mu_tilde, axis=-1) * inv_w - np.sum(dL_ds * s, axis=-1)
        return {
            "mu_tilde": d_mu_tilde,
            "log_scale_tilde": d_log_scale_tilde,
            "rho": d_rho,
        }
    r = np.exp(-params.log_inv_depth)
    sin_phi, cos_phi = np.sin(params.phi), np.cos(params.phi)
    sin_th, cos_th = np.sin(params.theta), np.cos(params.theta)
    mu = decode_position(params)
    dmu_dtheta = np.stack([-sin_phi * sin_th, sin_phi * cos_th, np.zeros_like(r)], axis=-1) * r[:, None]
    dmu_dphi = np.stack([cos_phi * cos_th, cos_phi * sin_th, -sin_phi], axis=-1) * r[:, None]
    return {
        "theta": np.sum(dL_dmu * dmu_dtheta, axis=-1),
        "phi": np.sum(dL_dmu * dmu_dphi, axis=-1),
        # r = exp(-raw), so dmu/draw = -mu.
        "log_inv_depth": -np.sum(dL_dmu * mu, axis=-1),
        "log_scale": dL_ds * decode_scale(params),
    }
