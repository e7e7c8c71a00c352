"""Train/test splitting, far masks, metric reports, telemetry."""

import numpy as np
import pytest

from hsplat.errors import DataError
from hsplat.geometry import Parametrization
from hsplat.metrics import (
    MetricReport,
    compute_far_masks,
    emit_metric_csv,
    emit_telemetry_csv,
    emit_w_histogram_csv,
    evaluate_view,
    split_train_test,
    telemetry_snapshot,
)

from conftest import make_random_set


class TestSplit:
    def test_every_eighth_view(self):
        train, test = split_train_test(list(range(16)))
        assert test == [0, 8]
        assert train == [i for i in range(16) if i % 8 != 0]

    def test_24_views(self):
        train, test = split_train_test(list(range(24)))
        assert test == [0, 8, 16]
        assert len(train) == 21

    def test_few_views_warns(self):
        with pytest.warns(UserWarning):
            train, test = split_train_test([0])
        assert test == [0] and train == []


class TestFarMasks:
    def test_ramp_percentile(self):
        depth = np.tile(np.arange(100.0), (10, 1))  # values 0..99 per row
        masks = compute_far_masks([depth], percentile=95.0)
        frac = masks[0].far_mask.mean()
        assert 0.04 <= frac <= 0.06
        assert masks[0].threshold == pytest.approx(np.percentile(depth, 95))

    def test_constant_map_entirely_far(self):
        depth = np.full((8, 8), 7.0)
        masks = compute_far_masks([depth])
        assert masks[0].far_mask.all()

    def test_threshold_shared_across_views(self):
        near = np.full((4, 4), 1.0)
        far = np.full((4, 4), 100.0)
        masks = compute_far_masks([near, far], percentile=50.0)
        assert masks[0].threshold == masks[1].threshold
        assert not masks[0].far_mask.any()
        assert masks[1].far_mask.all()

    def test_monotone_in_percentile(self):
        rng = np.random.default_rng(0)
        depth = rng.uniform(0, 500, (32, 32))
        m93 = compute_far_masks([depth], 93.0)[0].far_mask
        m97 = compute_far_masks([depth], 97.0)[0].far_mask
        assert (m97 <= m93).all() and m97.sum() < m93.sum()

    def test_nonfinite_handling(self):
        depth = np.full((4, 4), np.nan)
        with pytest.raises(DataError):
            compute_far_masks([depth])
        with pytest.raises(DataError):
            compute_far_masks([])
        mixed = np.full((4, 4), 10.0)
        mixed[0, 0] = np.inf
        mask = compute_far_masks([mixed], 50.0)[0].far_mask
        assert not mask[0, 0]  # non-finite pixels are never "far"


class TestReports:
    def test_masks_partition_the_image(self):
        rng = np.random.default_rng(1)
        pred = rng.uniform(0, 1, (10, 10, 3))
        gt = rng.uniform(0, 1, (10, 10, 3))
        depth = rng.uniform(0, 100, (10, 10))
        mask = compute_far_masks([depth], 80.0)[0]
        row = evaluate_view("v0", "test", pred, gt, far_mask=mask)
        far, near = mask.far_mask, ~mask.far_mask
        n_far, n_near = far.sum(), near.sum()
        mse_full = np.mean((pred - gt) ** 2)
        mse_split = (
            np.mean((pred[far] - gt[far]) ** 2) * n_far
            + np.mean((pred[near] - gt[near]) ** 2) * n_near
        ) / (n_far + n_near)
        assert mse_full == pytest.approx(mse_split, rel=1e-12)
        assert row.psnr_far == pytest.approx(10 * np.log10(1 / np.mean((pred[far] - gt[far]) ** 2)))

    def test_csv_columns(self, tmp_path):
        report = MetricReport(views=[
            evaluate_view("a", "test", np.zeros((4, 4, 3)), np.zeros((4, 4, 3)))
        ])
        path = tmp_path / "m.csv"
        text = emit_metric_csv(report, path)
        header, row = text.strip().split("\r\n") if "\r\n" in text else text.strip().split("\n")
        assert header.split(",") == [
            "view_id", "split", "psnr", "ssim", "psnr_near", "ssim_near",
            "psnr_far", "ssim_far", "lpips",
        ]
        assert row.split(",")[-1] == "n/a"
        assert row.split(",")[4] == ""  # near metrics absent without a mask
        assert path.exists()

    def test_report_means(self):
        r = MetricReport(views=[
            evaluate_view("a", "test", np.zeros((4, 4, 3)), np.full((4, 4, 3), 0.1)),
            evaluate_view("b", "test", np.zeros((4, 4, 3)), np.full((4, 4, 3), 0.2)),
        ])
        assert r.psnr == pytest.approx((r.views[0].psnr + r.views[1].psnr) / 2)
        assert r.psnr_far is None


class TestTelemetry:
    def test_farthest_10pct(self):
        gs = make_random_set(np.random.default_rng(2), n=10)
        gs.geom.mu = np.zeros((10, 3))
        gs.geom.mu[:, 0] = np.arange(1.0, 11.0)
        snap = telemetry_snapshot(gs, 7)
        assert snap["iter"] == 7 and snap["count"] == 10
        assert snap["mean_dist_farthest_10pct"] == pytest.approx(10.0)
        assert "w_histogram" not in snap

    def test_small_set_uses_one_point(self):
        gs = make_random_set(np.random.default_rng(3), n=3)
        gs.geom.mu = np.diag([3.0, 2.0, 1.0])
        snap = telemetry_snapshot(gs, 0)
        assert snap["mean_dist_farthest_10pct"] == pytest.approx(3.0)

    def test_w_histogram(self):
        gs = make_random_set(
            np.random.default_rng(4), Parametrization.HOMOGENEOUS, n=200,
            spread=4.0,
        )
        snap = telemetry_snapshot(gs, 1)
        h = snap["w_histogram"]
        assert h["counts"].sum() == 200
        w = np.exp(gs.geom.rho)
        assert h["edges"][0] <= w.min() and h["edges"][-1] == w.max()
        occupied = h["counts"] > 0
        assert np.isfinite(h["mean_dist"][occupied]).all()
        assert np.isnan(h["mean_dist"][~occupied]).all()

    def test_identical_weights_single_bin(self):
        gs = make_random_set(np.random.default_rng(5), Parametrization.HOMOGENEOUS, n=9)
        gs.geom.rho[:] = np.log(2.0)
        snap = telemetry_snapshot(gs, 0)
        assert (snap["w_histogram"]["counts"] > 0).sum() == 1

    def test_csv_emission(self, tmp_path):
        gs = make_random_set(np.random.default_rng(6), Parametrization.HOMOGENEOUS, n=40)
        snaps = [telemetry_snapshot(gs, i) for i in (0, 10)]
        text = emit_telemetry_csv(snaps, tmp_path / "t.csv")
        lines = text.strip().split("\n")
        assert lines[0].strip() == "iter,count,mean_dist_farthest_10pct"
        assert len(lines) == 3
        wh = emit_w_histogram_csv(snaps[-1], tmp_path / "w.csv")
        rows = wh.strip().split("\n")
        assert rows[0].strip() == "bin_lo,bin_hi,count,mean_dist"
        assert len(rows) - 1 == int((snaps[-1]["w_histogram"]["counts"] > 0).sum())

    def test_errors(self):
        gs = make_random_set(np.random.default_rng(7), n=2)
        empty = gs.select(np.zeros(2, dtype=bool))
        with pytest.raises(DataError):
            telemetry_snapshot(empty, 0)
        with pytest.raises(DataError):
            emit_w_histogram_csv(telemetry_snapshot(gs, 0))
