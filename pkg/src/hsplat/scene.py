"""Structure-of-arrays Gaussian store and scene initialization."""

from __future__ import annotations

from dataclasses import dataclass, field, fields as dc_fields

import numpy as np

from . import geometry, sh
from .errors import DataError
from .geometry import GeomParams, Parametrization


def inverse_sigmoid(x):
    return np.log(x / (1.0 - x))


def rgb_to_sh_dc(rgb: np.ndarray) -> np.ndarray:
    """Degree-0 coefficient reproducing `rgb` through the +0.5 offset."""
    return (rgb - 0.5) / sh.SH_C0


@dataclass
class PointCloud:
    positions: np.ndarray  # (M, 3)
    colors: np.ndarray     # (M, 3) in [0, 1]

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        self.colors = np.asarray(self.colors, dtype=np.float64)
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise DataError(f"positions must be (M, 3), got {self.positions.shape}")
        if self.colors.shape != self.positions.shape:
            raise DataError("colors must match positions in shape")
        if not np.isfinite(self.positions).all():
            raise DataError("point positions must be finite")


@dataclass
class GaussianSet:
    geom: GeomParams
    opacity_raw: np.ndarray  # (N,)
    sh_coeffs: np.ndarray    # (N, (L+1)^2, 3)
    active_sh_degree: int = 0
    max_sh_degree: int = 3

    def __post_init__(self):
        n = geometry.num_gaussians(self.geom)
        if self.opacity_raw.shape != (n,):
            raise DataError("opacity_raw length mismatch")
        k = sh.num_coeffs(self.max_sh_degree)
        if self.sh_coeffs.shape != (n, k, 3):
            raise DataError(
                f"sh_coeffs must be ({n}, {k}, 3), got {self.sh_coeffs.shape}"
            )
        if not 0 <= self.active_sh_degree <= self.max_sh_degree:
            raise DataError("active_sh_degree out of range")

    @property
    def count(self) -> int:
        return geometry.num_gaussians(self.geom)

    @property
    def parametrization(self) -> Parametrization:
        return self.geom.parametrization

    def positions(self) -> np.ndarray:
        return geometry.decode_position(self.geom)

    def scales(self) -> np.ndarray:
        return geometry.decode_scale(self.geom)

    def covariances(self) -> np.ndarray:
        return geometry.decode_covariance(self.geom)

    def opacities(self) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.opacity_raw))

    def param_arrays(self) -> dict[str, np.ndarray]:
        """Trainable raw arrays, keyed by field name. Mutations are in place."""
        out = {f.name: getattr(self.geom, f.name) for f in dc_fields(self.geom)}
        out["opacity_raw"] = self.opacity_raw
        out["sh_coeffs"] = self.sh_coeffs
        return out

    def set_param(self, name: str, value: np.ndarray) -> None:
        if name in ("opacity_raw", "sh_coeffs"):
            setattr(self, name, value)
        else:
            setattr(self.geom, name, value)

    def copy(self) -> "GaussianSet":
        return GaussianSet(
            geom=geometry.copy_params(self.geom),
            opacity_raw=self.opacity_raw.copy(),
            sh_coeffs=self.sh_coeffs.copy(),
            active_sh_degree=self.active_sh_degree,
            max_sh_degree=self.max_sh_degree,
        )

    def select(self, idx) -> "GaussianSet":
        return GaussianSet(
            geom=geometry.select_params(self.geom, idx),
            opacity_raw=self.opacity_raw[idx],
            sh_coeffs=self.sh_coeffs[idx],
            active_sh_degree=self.active_sh_degree,
            max_sh_degree=self.max_sh_degree,
        )

    def concat(self, other: "GaussianSet") -> "GaussianSet":
        if other.max_sh_degree != self.max_sh_degree:
            raise DataError("cannot concatenate sets with different max SH degree")
        return GaussianSet(
            geom=geometry.concat_params(self.geom, other.geom),
            opacity_raw=np.concatenate([self.opacity_raw, other.opacity_raw]),
            sh_coeffs=np.concatenate([self.sh_coeffs, other.sh_coeffs]),
            active_sh_degree=self.active_sh_degree,
            max_sh_degree=self.max_sh_degree,
        )


def _knn_mean_distance(positions: np.ndarray, k: int = 3) -> np.ndarray:
    """Mean distance to the k nearest neighbors, brute force over pairs."""
    m = positions.shape[0]
    if m == 1:
        return np.full(1, 0.1)
    d2 = np.sum((positions[:, None, :] - positions[None, :, :]) ** 2, axis=-1)
    np.fill_diagonal(d2, np.inf)
    kk = min(k, m - 1)
    nearest = np.sort(d2, axis=1)[:, :kk]
    return np.sqrt(nearest).mean(axis=1)


def init_from_points(
    cloud: PointCloud,
    parametrization: Parametrization,
    max_sh_degree: int = 3,
    init_opacity: float = 0.1,
    w_init: float | str | np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> GaussianSet:
    """One Gaussian per point with 3DGS-style defaults.

    Initial scale is the isotropic mean 3-NN distance, rotation is identity
    and only the SH DC term is set from the point color. Under the homogeneous
    parametrization `w_init` selects the weight: None/"1/d" for inverse
    distance, "random" for log-uniform in [0.01, 100], or an explicit value.
    """
    m = cloud.positions.shape[0]
    if m == 0:
        raise DataError("cannot initialize from an empty point cloud")
    scale = np.maximum(_knn_mean_distance(cloud.positions), 1e-7)
    s = np.repeat(scale[:, None], 3, axis=1)
    q = np.zeros((m, 4))
    q[:, 0] = 1.0

    w_hint = None
    if parametrization is Parametrization.HOMOGENEOUS:
        if w_init is None or (isinstance(w_init, str) and w_init == "1/d"):
            w_hint = 1.0 / np.maximum(np.linalg.norm(cloud.positions, axis=-1), 1e-9)
        elif isinstance(w_init, str) and w_init == "random":
            gen = rng if rng is not None else np.random.default_rng(0)
            w_hint = np.exp(gen.uniform(np.log(0.01), np.log(100.0), size=m))
        elif isinstance(w_init, str):
            raise DataError(f"unknown w_init {w_init!r}")
        else:
            w_hint = np.full(m, float(w_init))
    geom = geometry.encode_from_cartesian(cloud.positions, s, q, parametrization, w_hint)

    k = sh.num_coeffs(max_sh_degree)
    coeffs = np.zeros((m, k, 3))
    coeffs[:, 0, :] = rgb_to_sh_dc(cloud.colors)
    return GaussianSet(
        geom=geom,
        opacity_raw=np.full(m, inverse_sigmoid(init_opacity)),
        sh_coeffs=coeffs,
        active_sh_degree=0,
        max_sh_degree=max_sh_degree,
    )


def add_skybox(
    gset: GaussianSet,
    n: int,
    radius: float,
    color,
    up_axis: int = 2,
    rng: np.random.Generator | None = None,
) -> GaussianSet:
    """Append n uniformly sampled points on the upper hemisphere of `radius`."""
    if n < 0:
        raise DataError("skybox point count must be non-negative")
    if radius <= 0:
        raise DataError("skybox radius must be positive")
    if n == 0:
        return gset
    gen = rng if rng is not None else np.random.default_rng(0)
    v = gen.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=-1, keepdims=True)
    v[:, up_axis] = np.abs(v[:, up_axis])
    positions = v * radius
    # Spacing-based scale for a uniform hemisphere sample.
    area_per_point = 2 * np.pi * radius**2 / n
    s = np.full((n, 3), max(np.sqrt(area_per_point), 1e-7))
    q = np.zeros((n, 4))
    q[:, 0] = 1.0
    w_hint = None
    if gset.parametrization is Parametrization.HOMOGENEOUS:
        w_hint = np.full(n, 1.0 / radius)
    geom = geometry.encode_from_cartesian(positions, s, q, gset.parametrization, w_hint)
    k = sh.num_coeffs(gset.max_sh_degree)
    coeffs = np.zeros((n, k, 3))
    coeffs[:, 0, :] = rgb_to_sh_dc(np.asarray(color, dtype=np.float64))
    extra = GaussianSet(
        geom=geom,
        opacity_raw=np.full(n, inverse_sigmoid(0.1)),
        sh_coeffs=coeffs,
        active_sh_degree=gset.active_sh_degree,
        max_sh_degree=gset.max_sh_degree,
    )
    return gset.concat(extra)
