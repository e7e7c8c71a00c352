"""Training loop: Adam with per-parameter schedules, adaptive densification
and the modified pruning rule that lets large distant Gaussians survive."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .camera import Camera
from .errors import DataError, NumericError
from .geometry import Parametrization
from .grad import backward
from .loss import photometric_loss
from .render import RenderConfig, render
from .scene import GaussianSet, inverse_sigmoid


@dataclass
class TrainConfig:
    iterations: int = 50_000
    # Position-like parameters: exponential decay, scaled by scene extent.
    position_lr_init: float = 1.6e-4
    position_lr_final: float = 1.6e-6
    position_lr_max_steps: int | None = None  # defaults to `iterations`
    # Homogeneous weight / inverted depth: same decay shape, absolute scale.
    w_lr_init: float = 2e-4
    w_lr_final: float = 2e-6
    lr_w_multiplier: float = 1.0
    scaling_lr: float = 5e-3
    rotation_lr: float = 1e-3
    opacity_lr: float = 5e-2
    sh_lr: float = 2.5e-3          # rest terms use sh_lr / 20
    lambda_dssim: float = 0.2
    densify_interval: int = 100
    densify_start: int = 500
    densify_stop: int = 15_000
    densify_grad_threshold: float = 2e-4
    percent_dense: float = 0.01    # split threshold = percent_dense * extent
    opacity_reset_interval: int = 3000
    prune_opacity: float = 5e-3
    prune_screen_px: float = 20.0
    prune_world_extent_fraction: float = 0.1
    world_prune_enabled: bool | None = None  # None: on for Cartesian, off otherwise
    max_gaussians: int = 500_000
    sh_degree_interval: int = 1000
    seed: int = 0
    random_background: bool = False
    w_init: float | str | None = None
    render: RenderConfig = field(default_factory=RenderConfig)

    def __post_init__(self):
        if self.iterations <= 0 or self.densify_interval <= 0:
            raise DataError("iterations and intervals must be positive")
        if not 0.0 <= self.lambda_dssim <= 1.0:
            raise DataError("lambda_dssim must lie in [0, 1]")

    def resolved_world_prune(self, parametrization: Parametrization) -> bool:
        if self.world_prune_enabled is not None:
            return self.world_prune_enabled
        return parametrization is Parametrization.CARTESIAN


def train_config_to_dict(cfg: TrainConfig) -> dict:
    """JSON-ready dict; the inverse of `train_config_from_dict`."""
    d = dataclasses.asdict(cfg)
    d["render"]["dtype"] = np.dtype(cfg.render.dtype).name
    d["render"]["background"] = list(cfg.render.background)
    return d


def train_config_from_dict(d: dict) -> TrainConfig:
    d = dict(d)
    r = dict(d.pop("render", {}))
    if "dtype" in r:
        r["dtype"] = np.dtype(r["dtype"]).type
    if "background" in r:
        r["background"] = tuple(r["background"])
    known = {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = set(d) - known
    rknown = {f.name for f in dataclasses.fields(RenderConfig)}
    runknown = set(r) - rknown
    if unknown or runknown:
        bad = sorted(unknown | {f"render.{k}" for k in runknown})
        valid = sorted(known - {"render"}) + sorted(f"render.{k}" for k in rknown)
        raise DataError(f"unknown config keys {bad}; valid keys: {valid}")
    return TrainConfig(render=RenderConfig(**r), **d)


def expon_lr(init: float, final: float, max_steps: int):
    """Log-linear interpolation from init to final over max_steps."""
    def fn(step: int) -> float:
        if init <= 0:
            return 0.0
        t = min(max(step / max_steps, 0.0), 1.0)
        return float(np.exp((1.0 - t) * np.log(init) + t * np.log(final)))
    return fn


class AdamState:
    """First/second moment arrays mirroring the Gaussian parameter arrays."""

    def __init__(self, gset: GaussianSet, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in gset.param_arrays().items()}
        self.v = {k: np.zeros_like(v) for k, v in gset.param_arrays().items()}

    def step(self, gset: GaussianSet, grads: dict[str, np.ndarray], lrs: dict[str, float | np.ndarray]):
        self.step_count += 1
        bc1 = 1.0 - self.beta1**self.step_count
        bc2 = 1.0 - self.beta2**self.step_count
        for name, param in gset.param_arrays().items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            param -= lrs[name] * update

    def keep_rows(self, mask: np.ndarray):
        for d in (self.m, self.v):
            for k in d:
                d[k] = d[k][mask]

    def append_rows(self, n: int):
        for d in (self.m, self.v):
            for k in d:
                shape = (n,) + d[k].shape[1:]
                d[k] = np.concatenate([d[k], np.zeros(shape, dtype=d[k].dtype)])


def scene_extent(cameras: list[Camera]) -> float:
    """Radius of the bounding sphere of the camera centers (1.0 fallback)."""
    centers = np.stack([c.center for c in cameras])
    radius = float(np.linalg.norm(centers - centers.mean(axis=0), axis=1).max())
    return radius if radius > 1e-6 else 1.0


class Trainer:
    def __init__(
        self,
        gaussians: GaussianSet,
        views: list[tuple[Camera, np.ndarray]],
        cfg: TrainConfig,
        extent: float | None = None,
    ):
        if not views:
            raise DataError("training requires at least one view")
        self.gaussians = gaussians
        self.views = views
        self.cfg = cfg
        self.extent = extent if extent is not None else scene_extent([c for c, _ in views])
        self.adam = AdamState(gaussians)
        self.rng = np.random.default_rng(cfg.seed)
        self.iteration = 0
        self._epoch_order: list[int] = []
        max_steps = cfg.position_lr_max_steps or cfg.iterations
        self._pos_lr = expon_lr(
            cfg.position_lr_init * self.extent, cfg.position_lr_final * self.extent, max_steps
        )
        self._w_lr = expon_lr(
            cfg.w_lr_init * cfg.lr_w_multiplier, cfg.w_lr_final * cfg.lr_w_multiplier, max_steps
        )
        self._reset_densify_stats()
        self.history: list[dict] = []

    # -- scheduling --------------------------------------------------------

    def lr_for(self, name: str, iteration: int):
        pos = self._pos_lr(iteration)
        table = {
            "mu": pos,
            "mu_tilde": pos,
            "theta": pos,
            "phi": pos,
            "rho": self._w_lr(iteration),
            "log_inv_depth": self._w_lr(iteration),
            "log_scale": self.cfg.scaling_lr,
            "log_scale_tilde": self.cfg.scaling_lr,
            "rot": self.cfg.rotation_lr,
            "opacity_raw": self.cfg.opacity_lr,
        }
        if name == "sh_coeffs":
            k = self.gaussians.sh_coeffs.shape[1]
            lr = np.full((1, k, 1), self.cfg.sh_lr / 20.0)
            lr[0, 0, 0] = self.cfg.sh_lr
            return lr
        return table[name]

    # -- densification bookkeeping ----------------------------------------

    def _reset_densify_stats(self):
        n = self.gaussians.count
        self.grad_accum = np.zeros(n)
        self.grad_denom = np.zeros(n)
        self.max_radii = np.zeros(n)

    def _pick_view(self) -> int:
        if not self._epoch_order:
            order = np.arange(len(self.views))
            self.rng.shuffle(order)
            self._epoch_order = list(order)
        return self._epoch_order.pop()

    # -- one optimization step --------------------------------------------

    def train_step(self) -> dict:
        cfg = self.cfg
        it = self.iteration
        view_id = self._pick_view()
        cam, gt = self.views[view_id]

        rcfg = cfg.render
        if cfg.random_background:
            rcfg = dataclasses.replace(rcfg, background=tuple(self.rng.uniform(0, 1, 3)))
        out = render(self.gaussians, cam, rcfg)
        loss, dL = photometric_loss(out.radiance, gt, cfg.lambda_dssim)
        if not np.isfinite(loss):
            raise NumericError(f"non-finite loss at iteration {it}, view {view_id}")
        grads = backward(self.gaussians, cam, out, dL)

        if out.cache is not None:
            touched = out.cache.order
            self.grad_accum[touched] += grads.screen_grad_norm[touched]
            self.grad_denom[touched] += 1.0
            np.maximum.at(self.max_radii, touched, out.cache.radius)

        lrs = {name: self.lr_for(name, it) for name in grads.arrays}
        self.adam.step(self.gaussians, grads.arrays, lrs)

        self.iteration += 1
        it = self.iteration
        if it % cfg.sh_degree_interval == 0 and self.gaussians.active_sh_degree < self.gaussians.max_sh_degree:
            self.gaussians.active_sh_degree += 1
        if cfg.densify_start < it <= cfg.densify_stop and it % cfg.densify_interval == 0:
            self.densify_and_prune()
        if it % cfg.opacity_reset_interval == 0:
            self._reset_opacity()

        stats = {"iteration": it, "view": view_id, "loss": loss, "count": self.gaussians.count}
        self.history.append(stats)
        return stats

    def run(self, iterations: int | None = None, callback=None):
        total = iterations if iterations is not None else self.cfg.iterations
        while self.iteration < total:
            stats = self.train_step()
            if callback is not None:
                callback(self, stats)
        return self.history

    # -- adaptive density control -----------------------------------------

    def _reset_opacity(self):
        o = self.gaussians.opacities()
        self.gaussians.opacity_raw = inverse_sigmoid(np.minimum(o, 0.01))
        self.adam.m["opacity_raw"][:] = 0.0
        self.adam.v["opacity_raw"][:] = 0.0

    def densify_and_prune(self):
        cfg = self.cfg
        gs = self.gaussians
        extent = self.extent
        avg_grad = self.grad_accum / np.maximum(self.grad_denom, 1.0)
        scales = gs.scales()
        max_scale = scales.max(axis=1)

        over = avg_grad > cfg.densify_grad_threshold
        split_thresh = cfg.percent_dense * extent
        room = gs.count < cfg.max_gaussians
        clone_mask = over & (max_scale <= split_thresh) & room
        split_mask = over & (max_scale > split_thresh) & room

        # Clones duplicate raw parameters in place.
        clones = gs.select(clone_mask) if clone_mask.any() else None

        # Splits sample 2 children from the parent's world Gaussian, scale / 1.6.
        splits = None
        if split_mask.any():
            parents = gs.select(split_mask)
            n = parents.count
            mu = geometry.decode_position(parents.geom)
            R = geometry.quat_to_rotmat(parents.geom.rot)
            s = geometry.decode_scale(parents.geom)
            samples = self.rng.standard_normal((2, n, 3))
            child_geoms = []
            for k in range(2):
                offset = np.einsum("nij,nj->ni", R, samples[k] * s)
                child_mu = mu + offset
                child = geometry.copy_params(parents.geom)
                self._reencode_positions(child, child_mu)
                self._shrink_scales(child, 1.6)
                child_geoms.append(child)
            splits = GaussianSet(
                geom=geometry.concat_params(child_geoms[0], child_geoms[1]),
                opacity_raw=np.tile(parents.opacity_raw, 2),
                sh_coeffs=np.tile(parents.sh_coeffs, (2, 1, 1)),
                active_sh_degree=gs.active_sh_degree,
                max_sh_degree=gs.max_sh_degree,
            )

        # Prune rules on the pre-densification population.
        opacity = gs.opacities()
        prune = opacity < cfg.prune_opacity
        if self.iteration > cfg.opacity_reset_interval:
            prune |= self.max_radii > cfg.prune_screen_px
            if cfg.resolved_world_prune(gs.parametrization):
                prune |= max_scale > cfg.prune_world_extent_fraction * extent
        prune |= split_mask  # split parents are replaced by their children

        keep = ~prune
        new_set = gs.select(keep)
        self.adam.keep_rows(keep)
        appended = 0
        for extra in (clones, splits):
            if extra is not None and extra.count:
                new_set = new_set.concat(extra)
                appended += extra.count
        if appended:
            self.adam.append_rows(appended)
        self.gaussians = new_set
        self._reset_densify_stats()

    @staticmethod
    def _reencode_positions(geom, new_mu: np.ndarray):
        """Write new world positions into raw params, preserving each
        parametrization's depth bookkeeping (homogeneous children keep the
        parent's rho)."""
        if isinstance(geom, geometry.CartesianParams):
            geom.mu = new_mu
        elif isinstance(geom, geometry.HomogeneousParams):
            geom.mu_tilde = new_mu * np.exp(geom.rho)[:, None]
        else:
            r = np.linalg.norm(new_mu, axis=-1)
            r = np.maximum(r, 1e-12)
            geom.theta = np.arctan2(new_mu[:, 1], new_mu[:, 0])
            geom.phi = np.arccos(np.clip(new_mu[:, 2] / r, -1.0, 1.0))
            geom.log_inv_depth = -np.log(r)

    @staticmethod
    def _shrink_scales(geom, factor: float):
        ln_f = np.log(factor)
        if isinstance(geom, geometry.HomogeneousParams):
            geom.log_scale_tilde = geom.log_scale_tilde - ln_f
        else:
            geom.log_scale = geom.log_scale - ln_f
