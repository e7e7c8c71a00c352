"""CPU differentiable 3D Gaussian splatting with pluggable coordinate
parametrizations (Cartesian, homogeneous, inverted spherical)."""

from .camera import Camera, look_at_camera
from .errors import DataError, HsplatError, NumericError
from .geometry import (
    CartesianParams,
    HomogeneousParams,
    InvertedSphericalParams,
    Parametrization,
    decode_covariance,
    decode_position,
    decode_scale,
    encode_from_cartesian,
    rescale_homogeneous,
)
from .grad import backward, finite_diff_gradients
from .loss import photometric_loss, psnr, ssim
from .optim import AdamState, Trainer, TrainConfig, scene_extent
from .render import RenderConfig, RenderOutput, project_gaussian, render
from .scene import GaussianSet, PointCloud, add_skybox, init_from_points
from .sceneio import (
    load_checkpoint,
    load_manifest,
    read_ply_points,
    restore_trainer,
    save_checkpoint,
    write_ply_points,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "Camera",
    "CartesianParams",
    "DataError",
    "GaussianSet",
    "HomogeneousParams",
    "HsplatError",
    "InvertedSphericalParams",
    "NumericError",
    "Parametrization",
    "PointCloud",
    "RenderConfig",
    "RenderOutput",
    "TrainConfig",
    "Trainer",
    "add_skybox",
    "backward",
    "decode_covariance",
    "decode_position",
    "decode_scale",
    "encode_from_cartesian",
    "finite_diff_gradients",
    "init_from_points",
    "load_checkpoint",
    "load_manifest",
    "look_at_camera",
    "photometric_loss",
    "project_gaussian",
    "psnr",
    "read_ply_points",
    "render",
    "rescale_homogeneous",
    "restore_trainer",
    "save_checkpoint",
    "scene_extent",
    "ssim",
    "write_ply_points",
]
