"""Command-line interface: train, render, eval, simulate-1d, export, inspect.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import convergence, metrics, sceneio
from .errors import DataError, HsplatError, NumericError
from .geometry import Parametrization
from .optim import Trainer, TrainConfig, train_config_from_dict
from .render import render
from .scene import init_from_points
from .sceneio import load_checkpoint, load_manifest, save_checkpoint

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _default_threads() -> int:
    env = os.environ.get("HOGS_THREADS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError as e:
            raise DataError(f"HOGS_THREADS must be an integer, got {env!r}") from e
    return os.cpu_count() or 1


def _parse_override(text: str):
    if "=" not in text:
        raise DataError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _build_config(args) -> TrainConfig:
    doc = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as f:
                doc = json.load(f)
        except OSError as e:
            raise DataError(f"cannot read config {args.config}: {e}") from e
        except json.JSONDecodeError as e:
            raise DataError(f"malformed config JSON: {e}") from e
    for text in getattr(args, "set", None) or []:
        key, value = _parse_override(text)
        node = doc
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    if getattr(args, "iterations", None) is not None:
        doc["iterations"] = args.iterations
    if getattr(args, "seed", None) is not None:
        doc["seed"] = args.seed
    if getattr(args, "lr_w_multiplier", None) is not None:
        doc["lr_w_multiplier"] = args.lr_w_multiplier
    if getattr(args, "w_init", None) is not None:
        w = args.w_init
        if w not in ("1/d", "random"):
            try:
                w = float(w)
            except ValueError as e:
                raise DataError(
                    f"--w-init must be a number, '1/d' or 'random', got {w!r}"
                ) from e
        doc["w_init"] = w
    doc.setdefault("render", {})["threads"] = args.threads or _default_threads()
    return train_config_from_dict(doc)


def _views_from_scene(scene):
    return [(v.camera, v.image) for v in scene.views]


def cmd_train(args) -> int:
    cfg = _build_config(args)
    scene = load_manifest(args.manifest)
    parametrization = Parametrization.from_string(args.parametrization)
    gset = init_from_points(
        scene.point_cloud, parametrization, w_init=cfg.w_init
    )
    trainer = Trainer(gset, _views_from_scene(scene), cfg)
    os.makedirs(args.out, exist_ok=True)
    snapshots = []

    interval = args.checkpoint_interval or cfg.iterations
    while trainer.iteration < cfg.iterations:
        trainer.train_step()
        it = trainer.iteration
        if it % interval == 0 or it == cfg.iterations:
            save_checkpoint(os.path.join(args.out, f"ckpt_{it:06d}.hgsc"), trainer)
            snapshots.append(metrics.telemetry_snapshot(trainer.gaussians, it))

    with open(os.path.join(args.out, "loss.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["iteration", "view", "loss", "count"])
        for row in trainer.history:
            writer.writerow([row["iteration"], row["view"], repr(row["loss"]), row["count"]])
    metrics.emit_telemetry_csv(snapshots, os.path.join(args.out, "telemetry.csv"))
    if snapshots and "w_histogram" in snapshots[-1]:
        metrics.emit_w_histogram_csv(
            snapshots[-1], os.path.join(args.out, "w_histogram.csv")
        )
    print(f"trained {cfg.iterations} iterations, "
          f"{trainer.gaussians.count} gaussians, output in {args.out}")
    return EXIT_OK


def cmd_render(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    scene = load_manifest(args.manifest)
    cfg = train_config_from_dict(ckpt.config)
    if args.threads:
        cfg.render.threads = args.threads
    if args.all_test:
        _, test = metrics.split_train_test(list(range(len(scene.views))))
        indices = test
    else:
        if args.view is None:
            raise DataError("pass --view K or --all-test")
        if not 0 <= args.view < len(scene.views):
            raise DataError(
                f"view {args.view} out of range (scene has {len(scene.views)} views)"
            )
        indices = [args.view]
    os.makedirs(args.out, exist_ok=True)
    for i in indices:
        out = render(ckpt.gaussians, scene.views[i].camera, cfg.render)
        sceneio.write_png(os.path.join(args.out, f"render_{i:03d}.png"), out.radiance)
        if args.depth:
            sceneio.write_pfm(
                os.path.join(args.out, f"render_{i:03d}.pfm"), out.depth_expected
            )
    print(f"rendered {len(indices)} view(s) to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    scene = load_manifest(args.manifest)
    cfg = train_config_from_dict(ckpt.config)
    if args.threads:
        cfg.render.threads = args.threads
    _, test = metrics.split_train_test(list(range(len(scene.views))))
    depth_maps = [scene.views[i].depth for i in test]
    masks = None
    if all(d is not None for d in depth_maps):
        masks = metrics.compute_far_masks(depth_maps, args.far_percentile)
    report = metrics.MetricReport()
    for j, i in enumerate(test):
        view = scene.views[i]
        out = render(ckpt.gaussians, view.camera, cfg.render)
        report.views.append(
            metrics.evaluate_view(
                f"view_{i:03d}", "test", out.radiance, view.image,
                far_mask=masks[j] if masks else None,
            )
        )
    text = metrics.emit_metric_csv(report, args.out)
    if args.out:
        print(f"metrics written to {args.out}")
    else:
        print(text, end="")
    print(f"mean psnr {report.psnr:.3f} dB, mean ssim {report.ssim:.5f}")
    return EXIT_OK


def cmd_simulate_1d(args) -> int:
    cfg = convergence.Sim1DConfig(
        x0=args.x0, lr=args.lr, targets=tuple(args.targets),
        max_iters=args.max_iters, tol=args.tol, optimizer=args.optimizer,
    )
    traces = []
    for rep in ("cartesian", "homogeneous"):
        for tr in convergence.simulate_1d(cfg, rep):
            traces.append(tr)
            status = (f"{tr.iterations_to_tol} iterations"
                      if tr.converged else "did not converge")
            print(f"{rep} target {tr.target}: {status}")
    if args.out:
        convergence.emit_convergence_csv(traces, args.out)
        print(f"trace written to {args.out}")
    return EXIT_OK


def cmd_export(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    sceneio.export_3dgs_ply(args.out, ckpt.gaussians)
    print(f"exported {ckpt.gaussians.count} gaussians to {args.out}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    snap = metrics.telemetry_snapshot(ckpt.gaussians, ckpt.iteration)
    print(f"parametrization: {ckpt.parametrization}")
    print(f"iteration: {ckpt.iteration}")
    print(f"count: {snap['count']}")
    print(f"mean_dist_farthest_10pct: {snap['mean_dist_farthest_10pct']:.6g}")
    if "w_histogram" in snap:
        path = args.w_histogram or (
            os.path.splitext(args.checkpoint)[0] + "_w_histogram.csv"
        )
        metrics.emit_w_histogram_csv(snap, path)
        print(f"w_histogram: {path}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="hsplat", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: HOGS_THREADS or all cores; "
                            "1 = bit-deterministic reference mode)")

    p = sub.add_parser("train", help="optimize a scene from a manifest")
    p.add_argument("manifest")
    p.add_argument("--parametrization", default="cartesian",
                   choices=["cartesian", "homogeneous", "inverted-spherical"])
    p.add_argument("--config", help="JSON training config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="dotted-key config override, repeatable")
    p.add_argument("--iterations", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lr-w-multiplier", type=float, dest="lr_w_multiplier")
    p.add_argument("--w-init", dest="w_init",
                   help="initial weight: a number, '1/d' or 'random'")
    p.add_argument("--checkpoint-interval", type=int, default=0,
                   help="save every N iterations (default: final only)")
    p.add_argument("--out", required=True)
    add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("render", help="render views from a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("manifest")
    p.add_argument("--view", type=int)
    p.add_argument("--all-test", action="store_true")
    p.add_argument("--depth", action="store_true", help="also write PFM depth")
    p.add_argument("--out", required=True)
    add_common(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("eval", help="metric report over the test split")
    p.add_argument("checkpoint")
    p.add_argument("manifest")
    p.add_argument("--far-percentile", type=float, default=95.0)
    p.add_argument("--out", help="CSV path (default: print)")
    add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("simulate-1d", help="1D convergence study")
    p.add_argument("--x0", type=float, default=5.0)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--targets", type=float, nargs="+", default=[10.0, 50.0, 250.0])
    p.add_argument("--tol", type=float, default=0.5)
    p.add_argument("--max-iters", type=int, default=10_000)
    p.add_argument("--optimizer", default="adam", choices=["adam", "gd"])
    p.add_argument("--out", help="CSV path")
    p.set_defaults(func=cmd_simulate_1d)

    p = sub.add_parser("export", help="write a community-layout splat PLY")
    p.add_argument("checkpoint")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("inspect", help="summarize a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--w-histogram", help="histogram CSV path (homogeneous only)")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except HsplatError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
