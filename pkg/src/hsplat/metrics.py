"""Evaluation utilities: train/test splitting, near/far depth masks,
image-quality reports, and training telemetry.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .errors import DataError
from .loss import psnr, ssim  # noqa: F401  (re-exported as the metric API)
from .scene import GaussianSet

W_HISTOGRAM_BINS = 64


def split_train_test(views: list) -> tuple[list, list]:
    """Every eighth view (indices 0, 8, 16, ...) goes to the test split.

    Views must already be ordered (by filename). With fewer than 8 views the
    test split degenerates to the first view only; a warning is emitted.
    """
    if len(views) < 8:
        warnings.warn(
            f"only {len(views)} views; test split may be a single view",
            stacklevel=2,
        )
    train = [v for i, v in enumerate(views) if i % 8 != 0]
    test = [v for i, v in enumerate(views) if i % 8 == 0]
    return train, test


@dataclass
class DepthMask:
    far_mask: np.ndarray  # (H, W) bool
    threshold: float


def compute_far_masks(depth_maps: list, percentile: float = 95.0) -> list:
    """Far masks from a shared threshold: the given percentile of all finite
    depth values pooled across the views. A pixel is far when its depth is
    >= the threshold (a constant map is therefore entirely far).
    """
    if not depth_maps:
        raise DataError("no depth maps given")
    finite_all = []
    for i, d in enumerate(depth_maps):
        d = np.asarray(d, dtype=np.float64)
        finite = np.isfinite(d)
        if not finite.any():
            raise DataError(f"depth map {i} has no finite values")
        finite_all.append(d[finite])
    threshold = float(np.percentile(np.concatenate(finite_all), percentile))
    masks = []
    for d in depth_maps:
        d = np.asarray(d, dtype=np.float64)
        far = np.isfinite(d) & (d >= threshold)
        masks.append(DepthMask(far_mask=far, threshold=threshold))
    return masks


@dataclass
class ViewMetrics:
    view_id: str
    split: str
    psnr: float
    ssim: float
    psnr_near: float | None = None
    ssim_near: float | None = None
    psnr_far: float | None = None
    ssim_far: float | None = None


@dataclass
class MetricReport:
    views: list = field(default_factory=list)  # ViewMetrics rows

    @property
    def psnr(self) -> float:
        return float(np.mean([v.psnr for v in self.views]))

    @property
    def ssim(self) -> float:
        return float(np.mean([v.ssim for v in self.views]))

    def _mean_of(self, name):
        vals = [getattr(v, name) for v in self.views if getattr(v, name) is not None]
        return float(np.mean(vals)) if vals else None

    @property
    def psnr_far(self):
        return self._mean_of("psnr_far")

    @property
    def psnr_near(self):
        return self._mean_of("psnr_near")

    @property
    def ssim_far(self):
        return self._mean_of("ssim_far")

    @property
    def ssim_near(self):
        return self._mean_of("ssim_near")


def evaluate_view(
    view_id: str,
    split: str,
    pred: np.ndarray,
    gt: np.ndarray,
    far_mask: DepthMask | None = None,
) -> ViewMetrics:
    row = ViewMetrics(
        view_id=view_id, split=split, psnr=psnr(pred, gt), ssim=ssim(pred, gt)
    )
    if far_mask is not None:
        far = far_mask.far_mask
        near = ~far
        if far.shape != pred.shape[:2]:
            raise DataError("far mask does not match image dimensions")
        if far.any():
            row.psnr_far = psnr(pred, gt, mask=far)
            row.ssim_far = ssim(pred, gt, mask=far)
        if near.any():
            row.psnr_near = psnr(pred, gt, mask=near)
            row.ssim_near = ssim(pred, gt, mask=near)
    return row


def emit_metric_csv(report: MetricReport, path=None) -> str:
    """CSV rows per view; the lpips column is a placeholder to keep table
    shapes comparable with GPU pipelines that compute it."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(
        ["view_id", "split", "psnr", "ssim", "psnr_near", "ssim_near",
         "psnr_far", "ssim_far", "lpips"]
    )
    fmt = lambda v: "" if v is None else repr(float(v))
    for v in report.views:
        writer.writerow(
            [v.view_id, v.split, fmt(v.psnr), fmt(v.ssim), fmt(v.psnr_near),
             fmt(v.ssim_near), fmt(v.psnr_far), fmt(v.ssim_far), "n/a"]
        )
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as f:
            f.write(text)
    return text


def telemetry_snapshot(gset: GaussianSet, iteration: int) -> dict:
    """Per-checkpoint statistics: Gaussian count, mean distance of the
    farthest 10% of decoded positions, and (homogeneous sets only) a
    64-bin log-spaced histogram of w with per-bin mean decoded distance.
    """
    if gset.count == 0:
        raise DataError("telemetry on an empty set")
    dist = np.linalg.norm(gset.positions(), axis=-1)
    k = max(1, int(np.ceil(0.1 * gset.count)))
    far_mean = float(np.sort(dist)[-k:].mean())
    snap = {
        "iter": int(iteration),
        "count": int(gset.count),
        "mean_dist_farthest_10pct": far_mean,
    }
    if isinstance(gset.geom, geometry.HomogeneousParams):
        w = np.exp(gset.geom.rho)
        w_min, w_max = float(w.min()), float(w.max())
        if w_max > w_min:
            edges = np.logspace(
                np.log10(w_min), np.log10(w_max), W_HISTOGRAM_BINS + 1
            )
            edges[-1] = w_max  # guard the top edge against rounding
        else:
            edges = np.linspace(w_min - 0.5, w_min + 0.5, W_HISTOGRAM_BINS + 1)
        counts, _ = np.histogram(w, bins=edges)
        bin_idx = np.clip(np.searchsorted(edges, w, side="right") - 1, 0,
                          W_HISTOGRAM_BINS - 1)
        sums = np.zeros(W_HISTOGRAM_BINS)
        np.add.at(sums, bin_idx, dist)
        mean_dist = np.full(W_HISTOGRAM_BINS, np.nan)
        occupied = counts > 0
        mean_dist[occupied] = sums[occupied] / counts[occupied]
        snap["w_histogram"] = {
            "edges": edges,
            "counts": counts,
            "mean_dist": mean_dist,
        }
    return snap


def emit_telemetry_csv(snapshots: list, path=None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["iter", "count", "mean_dist_farthest_10pct"])
    for s in snapshots:
        writer.writerow([s["iter"], s["count"], repr(s["mean_dist_farthest_10pct"])])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as f:
            f.write(text)
    return text


def emit_w_histogram_csv(snapshot: dict, path=None) -> str:
    """One row per occupied histogram bin of the latest snapshot."""
    if "w_histogram" not in snapshot:
        raise DataError("snapshot has no w histogram (not a homogeneous set)")
    h = snapshot["w_histogram"]
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["bin_lo", "bin_hi", "count", "mean_dist"])
    for i in range(len(h["counts"])):
        if h["counts"][i] > 0:
            writer.writerow(
                [repr(float(h["edges"][i])), repr(float(h["edges"][i + 1])),
                 int(h["counts"][i]), repr(float(h["mean_dist"][i]))]
            )
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as f:
            f.write(text)
    return text
