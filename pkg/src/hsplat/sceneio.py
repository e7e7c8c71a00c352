"""Scene manifests, point clouds, images, depth maps and checkpoints.

File formats: JSON manifest, PLY (ASCII and binary little-endian), 8-bit PNG,
PFM float depth maps, and a versioned little-endian checkpoint container
(magic "HGSC") that captures everything needed to resume training
bit-identically: raw Gaussian arrays, Adam moments, RNG state, densification
statistics and the training configuration.
"""

from __future__ import annotations

import json
import os
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from . import geometry
from .camera import Camera
from .errors import DataError
from .optim import Trainer, train_config_from_dict, train_config_to_dict
from .scene import GaussianSet, PointCloud

CHECKPOINT_MAGIC = b"HGSC"
CHECKPOINT_VERSION = 1
MANIFEST_VERSION = 1


# --------------------------------------------------------------------------
# PNG
# --------------------------------------------------------------------------

def read_png(path) -> np.ndarray:
    """8-bit PNG to a float64 (H, W, 3) array in [0, 1]."""
    with Image.open(path) as im:
        if im.format != "PNG":
            raise DataError(f"{path}: not a PNG file (format {im.format})")
        if im.mode not in ("RGB", "RGBA", "L", "LA", "P"):
            raise DataError(f"{path}: unsupported PNG mode {im.mode} (need 8-bit)")
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def write_png(path, image: np.ndarray) -> None:
    """Float [0, 1] (H, W, 3) array to an 8-bit PNG."""
    data = np.clip(np.asarray(image), 0.0, 1.0)
    data = np.round(data * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path, format="PNG")


# --------------------------------------------------------------------------
# PFM depth maps
# --------------------------------------------------------------------------

def read_pfm(path) -> np.ndarray:
    """Grayscale PFM ("Pf") to a float64 (H, W) array, top row first.

    The sign of the scale line selects endianness (negative: little-endian);
    rows are stored bottom-up per the format.
    """
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic != b"Pf":
            raise DataError(f"{path}: PFM magic {magic!r} is not 'Pf'")
        dims = f.readline().split()
        if len(dims) != 2:
            raise DataError(f"{path}: malformed PFM dimension line")
        width, height = int(dims[0]), int(dims[1])
        scale = float(f.readline())
        if scale == 0:
            raise DataError(f"{path}: PFM scale must be nonzero")
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(f.read(width * height * 4), dtype=dtype)
        if data.size != width * height:
            raise DataError(f"{path}: truncated PFM payload")
    return data.reshape(height, width)[::-1].astype(np.float64)


def write_pfm(path, depth: np.ndarray, little_endian: bool = True) -> None:
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2:
        raise DataError("depth map must be 2-D")
    h, w = depth.shape
    dtype = "<f4" if little_endian else ">f4"
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode())
        f.write(b"-1.0\n" if little_endian else b"1.0\n")
        f.write(depth[::-1].astype(dtype).tobytes())


# --------------------------------------------------------------------------
# PLY
# --------------------------------------------------------------------------

_PLY_TYPES = {
    "float": "<f4", "float32": "<f4", "double": "<f8", "float64": "<f8",
    "uchar": "u1", "uint8": "u1", "char": "i1", "int8": "i1",
    "ushort": "<u2", "uint16": "<u2", "short": "<i2", "int16": "<i2",
    "uint": "<u4", "uint32": "<u4", "int": "<i4", "int32": "<i4",
}


def _read_ply_header(f, path):
    if f.readline().strip() != b"ply":
        raise DataError(f"{path}: missing 'ply' magic")
    fmt = None
    elements = []  # (name, count, [(prop_name, type_str), ...])
    while True:
        line = f.readline()
        if not line:
            raise DataError(f"{path}: header ended without end_header")
        tokens = line.decode("ascii", "replace").split()
        if not tokens or tokens[0] == "comment":
            continue
        if tokens[0] == "format":
            fmt = tokens[1]
        elif tokens[0] == "element":
            elements.append((tokens[1], int(tokens[2]), []))
        elif tokens[0] == "property":
            if not elements:
                raise DataError(f"{path}: property before any element")
            if tokens[1] == "list":
                raise DataError(
                    f"{path}: list property {tokens[-1]!r} in element "
                    f"{elements[-1][0]!r} is not supported"
                )
            if tokens[1] not in _PLY_TYPES:
                raise DataError(f"{path}: unsupported property type {tokens[1]!r}")
            elements[-1][2].append((tokens[2], tokens[1]))
        elif tokens[0] == "end_header":
            break
    if fmt not in ("ascii", "binary_little_endian"):
        raise DataError(f"{path}: unsupported PLY format {fmt!r}")
    return fmt, elements


def _read_ply_tables(path):
    """All elements of a PLY file as {name: structured array}."""
    with open(path, "rb") as f:
        fmt, elements, = _read_ply_header(f, path)
        tables = {}
        if fmt == "binary_little_endian":
            for name, count, props in elements:
                dt = np.dtype([(p, _PLY_TYPES[t]) for p, t in props])
                raw = f.read(dt.itemsize * count)
                if len(raw) != dt.itemsize * count:
                    raise DataError(f"{path}: truncated element {name!r}")
                tables[name] = np.frombuffer(raw, dtype=dt)
        else:
            text = f.read().decode("ascii", "replace").split()
            pos = 0
            for name, count, props in elements:
                dt = np.dtype([(p, _PLY_TYPES[t]) for p, t in props])
                n_fields = len(props)
                arr = np.empty(count, dtype=dt)
                need = count * n_fields
                if pos + need > len(text):
                    raise DataError(f"{path}: truncated element {name!r}")
                block = np.array(text[pos:pos + need], dtype=np.float64)
                block = block.reshape(count, n_fields)
                for j, (p, _) in enumerate(props):
                    arr[p] = block[:, j]
                pos += need
                tables[name] = arr
    return tables


def read_ply_points(path) -> PointCloud:
    """Vertex positions (and optional uchar colors, else 0.5 gray)."""
    tables = _read_ply_tables(path)
    if "vertex" not in tables:
        raise DataError(f"{path}: no 'vertex' element")
    v = tables["vertex"]
    names = v.dtype.names
    for axis in ("x", "y", "z"):
        if axis not in names:
            raise DataError(f"{path}: vertex element lacks property {axis!r}")
    positions = np.stack([v["x"], v["y"], v["z"]], axis=-1).astype(np.float64)
    if all(c in names for c in ("red", "green", "blue")):
        colors = np.stack([v["red"], v["green"], v["blue"]], axis=-1) / 255.0
    else:
        colors = np.full_like(positions, 0.5)
    return PointCloud(positions=positions, colors=colors)


def write_ply_points(path, pc: PointCloud) -> None:
    """Binary little-endian PLY with float32 positions and uchar colors."""
    n = pc.positions.shape[0]
    dt = np.dtype([("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
                   ("red", "u1"), ("green", "u1"), ("blue", "u1")])
    rec = np.empty(n, dtype=dt)
    pos = pc.positions.astype("<f4")
    rec["x"], rec["y"], rec["z"] = pos[:, 0], pos[:, 1], pos[:, 2]
    col = np.clip(np.round(pc.colors * 255.0), 0, 255).astype("u1")
    rec["red"], rec["green"], rec["blue"] = col[:, 0], col[:, 1], col[:, 2]
    with open(path, "wb") as f:
        f.write(b"ply\nformat binary_little_endian 1.0\n")
        f.write(f"element vertex {n}\n".encode())
        f.write(b"property float x\nproperty float y\nproperty float z\n"
                b"property uchar red\nproperty uchar green\nproperty uchar blue\n"
                b"end_header\n")
        f.write(rec.tobytes())


def export_3dgs_ply(path, gset: GaussianSet) -> None:
    """Write the set in the community splat-viewer vertex layout.

    Positions and scales are decoded to Cartesian first, so non-Cartesian
    raw parameters are not preserved (checkpoints are the lossless format).
    """
    n = gset.count
    k = gset.sh_coeffs.shape[1]
    n_rest = (k - 1) * 3
    names = (["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
             + [f"f_rest_{i}" for i in range(n_rest)]
             + ["opacity", "scale_0", "scale_1", "scale_2",
                "rot_0", "rot_1", "rot_2", "rot_3"])
    dt = np.dtype([(nm, "<f4") for nm in names])
    rec = np.zeros(n, dtype=dt)
    if n:
        mu = gset.positions().astype("<f4")
        rec["x"], rec["y"], rec["z"] = mu[:, 0], mu[:, 1], mu[:, 2]
        for c in range(3):
            rec[f"f_dc_{c}"] = gset.sh_coeffs[:, 0, c]
        # Channel-major rest coefficients, the layout viewers expect.
        rest = np.transpose(gset.sh_coeffs[:, 1:, :], (0, 2, 1)).reshape(n, -1)
        for i in range(n_rest):
            rec[f"f_rest_{i}"] = rest[:, i]
        rec["opacity"] = gset.opacity_raw
        log_s = np.log(gset.scales())
        for i in range(3):
            rec[f"scale_{i}"] = log_s[:, i]
        for i in range(4):
            rec[f"rot_{i}"] = gset.geom.rot[:, i]
    with open(path, "wb") as f:
        f.write(b"ply\nformat binary_little_endian 1.0\n")
        f.write(f"element vertex {n}\n".encode())
        for nm in names:
            f.write(f"property float {nm}\n".encode())
        f.write(b"end_header\n")
        f.write(rec.tobytes())


def read_3dgs_ply(path) -> GaussianSet:
    """Load a community-layout splat PLY as a Cartesian set."""
    tables = _read_ply_tables(path)
    if "vertex" not in tables:
        raise DataError(f"{path}: no 'vertex' element")
    v = tables["vertex"]
    names = v.dtype.names
    n = v.shape[0]
    n_rest = sum(1 for nm in names if nm.startswith("f_rest_"))
    if n_rest % 3 != 0:
        raise DataError(f"{path}: f_rest count {n_rest} is not divisible by 3")
    k = n_rest // 3 + 1
    degree = int(round(np.sqrt(k))) - 1
    if (degree + 1) ** 2 != k:
        raise DataError(f"{path}: {k} SH coefficients is not a full degree")
    sh = np.zeros((n, k, 3))
    mu = np.zeros((n, 3))
    log_scale = np.zeros((n, 3))
    rot = np.zeros((n, 4))
    if n:
        mu = np.stack([v["x"], v["y"], v["z"]], axis=-1).astype(np.float64)
        log_scale = np.stack(
            [v[f"scale_{i}"] for i in range(3)], axis=-1).astype(np.float64)
        rot = np.stack([v[f"rot_{i}"] for i in range(4)], axis=-1).astype(np.float64)
        for c in range(3):
            sh[:, 0, c] = v[f"f_dc_{c}"]
            for j in range(k - 1):
                sh[:, 1 + j, c] = v[f"f_rest_{c * (k - 1) + j}"]
    geom = geometry.CartesianParams(mu=mu, log_scale=log_scale, rot=rot)
    return GaussianSet(
        geom=geom,
        opacity_raw=(v["opacity"].astype(np.float64) if n else np.zeros(0)),
        sh_coeffs=sh,
        active_sh_degree=degree,
        max_sh_degree=degree,
    )


# --------------------------------------------------------------------------
# Scene manifests
# --------------------------------------------------------------------------

@dataclass
class LoadedView:
    camera: Camera
    image: np.ndarray            # (H, W, 3) float in [0, 1]
    depth: np.ndarray | None     # (H, W) float or None
    image_path: str


@dataclass
class LoadedScene:
    manifest: dict
    point_cloud: PointCloud
    views: list = field(default_factory=list)  # LoadedView


def write_manifest(path, point_cloud_path: str, views: list) -> None:
    """`views` holds dicts with image_path, optional depth_path, intrinsics,
    rotation (9 reals, row-major) and translation (3 reals)."""
    doc = {
        "version": MANIFEST_VERSION,
        "point_cloud_path": point_cloud_path,
        "views": views,
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)


def load_manifest(path) -> LoadedScene:
    base = os.path.dirname(os.path.abspath(path))
    try:
        with open(path) as f:
            doc = json.load(f)
    except OSError as e:
        raise DataError(f"cannot read manifest {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise DataError(f"malformed manifest JSON in {path}: {e}") from e
    if doc.get("version") != MANIFEST_VERSION:
        raise DataError(
            f"{path}: manifest version {doc.get('version')!r}, "
            f"expected {MANIFEST_VERSION}"
        )
    pc = read_ply_points(os.path.join(base, doc["point_cloud_path"]))
    scene = LoadedScene(manifest=doc, point_cloud=pc)
    for i, v in enumerate(doc["views"]):
        R = np.asarray(v["rotation"], dtype=np.float64).reshape(3, 3)
        err = np.abs(R @ R.T - np.eye(3)).max()
        if err > 1e-6:
            raise DataError(
                f"view {i}: rotation is not orthonormal (max error {err:.2e})"
            )
        if err > 1e-9:
            warnings.warn(
                f"view {i}: re-orthonormalizing rotation (max error {err:.2e})",
                stacklevel=2,
            )
            u, _, vt = np.linalg.svd(R)
            R = u @ vt
        if np.linalg.det(R) < 0:
            raise DataError(f"view {i}: rotation is a reflection")
        t = np.asarray(v["translation"], dtype=np.float64)
        cam = Camera(
            fx=float(v["fx"]), fy=float(v["fy"]),
            cx=float(v["cx"]), cy=float(v["cy"]),
            width=int(v["width"]), height=int(v["height"]),
            world_to_cam=np.concatenate([R, t[:, None]], axis=1),
        )
        image = read_png(os.path.join(base, v["image_path"]))
        if image.shape[:2] != (cam.height, cam.width):
            raise DataError(
                f"view {i}: image is {image.shape[1]}x{image.shape[0]}, "
                f"manifest says {cam.width}x{cam.height}"
            )
        depth = None
        if v.get("depth_path"):
            dpath = os.path.join(base, v["depth_path"])
            if os.path.exists(dpath):
                depth = read_pfm(dpath)
            else:
                warnings.warn(
                    f"view {i}: depth map {v['depth_path']} is missing; "
                    "far-mask evaluation unavailable for this view",
                    stacklevel=2,
                )
        scene.views.append(
            LoadedView(camera=cam, image=image, depth=depth,
                       image_path=v["image_path"])
        )
    return scene


# --------------------------------------------------------------------------
# Checkpoints
# --------------------------------------------------------------------------

_GEOM_CLASSES = {
    "cartesian": geometry.CartesianParams,
    "homogeneous": geometry.HomogeneousParams,
    "inverted-spherical": geometry.InvertedSphericalParams,
}


@dataclass
class Checkpoint:
    parametrization: str
    iteration: int
    gaussians: GaussianSet
    config: dict                   # TrainConfig echo
    adam_m: dict
    adam_v: dict
    adam_step_count: int
    rng_state: dict
    epoch_order: list
    grad_accum: np.ndarray
    grad_denom: np.ndarray
    max_radii: np.ndarray
    extent: float


def save_checkpoint(path, trainer: Trainer) -> None:
    gs = trainer.gaussians
    arrays = {}
    for name, arr in gs.param_arrays().items():
        arrays[f"param/{name}"] = arr
    for name, arr in trainer.adam.m.items():
        arrays[f"adam_m/{name}"] = arr
    for name, arr in trainer.adam.v.items():
        arrays[f"adam_v/{name}"] = arr
    arrays["stats/grad_accum"] = trainer.grad_accum
    arrays["stats/grad_denom"] = trainer.grad_denom
    arrays["stats/max_radii"] = trainer.max_radii

    index = []
    blobs = []
    for key, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        le = arr.dtype.newbyteorder("<")
        blobs.append(arr.astype(le, copy=False).tobytes())
        index.append({"key": key, "dtype": np.dtype(le).str,
                      "shape": list(arr.shape)})
    header = {
        "parametrization": gs.parametrization.value,
        "iteration": trainer.iteration,
        "active_sh_degree": gs.active_sh_degree,
        "max_sh_degree": gs.max_sh_degree,
        "adam_step_count": trainer.adam.step_count,
        "rng_state": trainer.rng.bit_generator.state,
        "epoch_order": [int(i) for i in trainer._epoch_order],
        "extent": trainer.extent,
        "config": train_config_to_dict(trainer.cfg),
        "arrays": index,
    }
    payload = json.dumps(header).encode()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<Q", len(payload)))
        f.write(payload)
        for b in blobs:
            f.write(b)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise DataError(f"{path}: bad checkpoint magic {magic!r}")
        (version,) = struct.unpack("<I", f.read(4))
        if version != CHECKPOINT_VERSION:
            raise DataError(
                f"{path}: checkpoint version {version}, "
                f"this build reads version {CHECKPOINT_VERSION}"
            )
        (hlen,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(hlen))
        arrays = {}
        for entry in header["arrays"]:
            dt = np.dtype(entry["dtype"])
            count = int(np.prod(entry["shape"])) if entry["shape"] else 1
            raw = f.read(dt.itemsize * count)
            if len(raw) != dt.itemsize * count:
                raise DataError(f"{path}: truncated array {entry['key']!r}")
            arrays[entry["key"]] = (
                np.frombuffer(raw, dtype=dt)
                .reshape(entry["shape"])
                .astype(dt.newbyteorder("="))
            )

    tag = header["parametrization"]
    if tag not in _GEOM_CLASSES:
        raise DataError(f"{path}: unknown parametrization {tag!r}")
    geom_cls = _GEOM_CLASSES[tag]
    geom_fields = [f for f in geom_cls.__dataclass_fields__]
    geom = geom_cls(**{f: arrays[f"param/{f}"] for f in geom_fields})
    gs = GaussianSet(
        geom=geom,
        opacity_raw=arrays["param/opacity_raw"],
        sh_coeffs=arrays["param/sh_coeffs"],
        active_sh_degree=header["active_sh_degree"],
        max_sh_degree=header["max_sh_degree"],
    )
    pick = lambda prefix: {
        k.split("/", 1)[1]: v for k, v in arrays.items() if k.startswith(prefix)
    }
    return Checkpoint(
        parametrization=tag,
        iteration=header["iteration"],
        gaussians=gs,
        config=header["config"],
        adam_m=pick("adam_m/"),
        adam_v=pick("adam_v/"),
        adam_step_count=header["adam_step_count"],
        rng_state=header["rng_state"],
        epoch_order=header["epoch_order"],
        grad_accum=arrays["stats/grad_accum"],
        grad_denom=arrays["stats/grad_denom"],
        max_radii=arrays["stats/max_radii"],
        extent=header["extent"],
    )


def restore_trainer(ckpt: Checkpoint, views: list) -> Trainer:
    """Rebuild a Trainer that continues the saved run bit-identically."""
    cfg = train_config_from_dict(ckpt.config)
    trainer = Trainer(ckpt.gaussians, views, cfg, extent=ckpt.extent)
    trainer.iteration = ckpt.iteration
    trainer.adam.step_count = ckpt.adam_step_count
    trainer.adam.m = {k: v.copy() for k, v in ckpt.adam_m.items()}
    trainer.adam.v = {k: v.copy() for k, v in ckpt.adam_v.items()}
    trainer.rng.bit_generator.state = ckpt.rng_state
    trainer._epoch_order = list(ckpt.epoch_order)
    trainer.grad_accum = ckpt.grad_accum.copy()
    trainer.grad_denom = ckpt.grad_denom.copy()
    trainer.max_radii = ckpt.max_radii.copy()
    return trainer
