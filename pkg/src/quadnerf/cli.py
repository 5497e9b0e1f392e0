"""``quadnerf`` command line: probmap, train, bench and render.

Exit codes: 0 ok, 2 usage or config error, 3 data or checkpoint error,
4 numeric failure during training.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import diagnostics
from .config import ConfigError, RunConfig, load_config
from .field import CheckpointError, NonFiniteGradientError, VoxelField, load_checkpoint, \
    save_checkpoint
from .geometry import Camera, DatasetError, generate_scene, load_nerf_synthetic
from .imaging import ContextMetric, ImageFormatError, load_png, probability_map, save_gray_png, \
    save_png
from .render import NonFiniteLossError, RaySampling, render_view
from .trainer import EmptyRayPoolError, baseline_uniform_train, evaluate, train, write_logs_csv

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("quadnerf")


def load_scene(cfg: RunConfig):
    s = cfg.scene
    if s.kind == "generated":
        return generate_scene(s.spec(), s.n_train, s.n_test, s.resolution, s.seed, s.n_samples)
    return load_nerf_synthetic(s.path, s.near, s.far)


def new_field(cfg: RunConfig) -> VoxelField:
    b = cfg.field.bound
    return VoxelField(cfg.field.resolution, ((-b, -b, -b), (b, b, b)))


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.dumps() + "\n")
    return out


def cmd_probmap(args) -> int:
    image = load_png(args.image)
    prob = probability_map(image, ContextMetric(args.metric, args.patch))
    save_gray_png(prob.weights, args.out)
    log.info("wrote %s (%dx%d, mass %.3f)", args.out, prob.height, prob.width, prob.total)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    out = _outdir(cfg)
    dataset = load_scene(cfg)
    tc = cfg.train_config()
    rounds_dir = out / "rounds"
    if not args.no_overlays:
        rounds_dir.mkdir(exist_ok=True)

    def on_subdivide(rnd, epoch, trees, draws, reports):
        if args.no_overlays:
            return
        diagnostics.write_leaf_csv(trees, draws, rounds_dir / f"leaves_round{rnd}.csv")
        for tree, dr, rep in zip(trees, draws, reports):
            diagnostics.save_overlay(rounds_dir / f"round{rnd}_view{tree.view}.png",
                                     dataset.images[tree.view], tree, dr, rep)

    result = train(dataset, new_field(cfg), tc, on_subdivide=on_subdivide)
    save_checkpoint(result.field, out / "field.bin")
    write_logs_csv(result.logs, out / "epochs.csv", include_time=False)
    with open(out / "timing.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "seconds"])
        w.writerows((e.epoch, f"{e.seconds:.6f}") for e in result.logs)
    if result.logs:
        last = result.logs[-1]
        print(f"trained {len(result.logs)} epochs, {sum(e.rays for e in result.logs)} rays, "
              f"test PSNR {last.psnr:.3f} dB, SSIM {last.ssim:.4f}")
    else:
        print("trained 0 epochs")
    return EXIT_OK


def _pct(part, whole):
    return 100.0 * (1.0 - part / whole) if whole else 0.0


def cmd_bench(args) -> int:
    cfg = load_config(args.config)
    out = _outdir(cfg)
    dataset = load_scene(cfg)
    tc = cfg.train_config()
    tc = replace(tc, eval_every=1)

    arms = {}
    log.info("baseline arm: uniform sampling")
    arms["baseline"] = baseline_uniform_train(dataset, new_field(cfg), tc).logs
    log.info("adaptive arm: quadtree sampling")
    arms["adaptive"] = train(dataset, new_field(cfg), tc).logs

    with open(out / "bench_epochs.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["arm", "epoch", "rays", "seconds", "psnr", "ssim"])
        for arm, logs in arms.items():
            for e in logs:
                w.writerow([arm, e.epoch, e.rays, f"{e.seconds:.6f}", repr(e.psnr), repr(e.ssim)])

    base, adap = arms["baseline"], arms["adaptive"]
    summary = {
        "rays_baseline": sum(e.rays for e in base),
        "rays_adaptive": sum(e.rays for e in adap),
        "seconds_baseline": sum(e.seconds for e in base),
        "seconds_adaptive": sum(e.seconds for e in adap),
        "psnr_baseline": base[-1].psnr if base else float("nan"),
        "psnr_adaptive": adap[-1].psnr if adap else float("nan"),
    }
    summary["ray_reduction_pct"] = _pct(summary["rays_adaptive"], summary["rays_baseline"])
    summary["time_reduction_pct"] = _pct(summary["seconds_adaptive"], summary["seconds_baseline"])
    summary["delta_psnr"] = summary["psnr_adaptive"] - summary["psnr_baseline"]
    with open(out / "bench_summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(summary))
        w.writeheader()
        w.writerow(summary)
    print(f"rays: baseline {summary['rays_baseline']}, adaptive {summary['rays_adaptive']} "
          f"({summary['ray_reduction_pct']:.1f}% fewer)")
    print(f"time: baseline {summary['seconds_baseline']:.1f}s, adaptive "
          f"{summary['seconds_adaptive']:.1f}s ({summary['time_reduction_pct']:.1f}% less)")
    print(f"PSNR: baseline {summary['psnr_baseline']:.3f}, adaptive "
          f"{summary['psnr_adaptive']:.3f} (delta {summary['delta_psnr']:+.3f} dB)")
    return EXIT_OK


def _camera_from_json(path) -> Camera:
    try:
        doc = json.loads(Path(path).read_text())
        return Camera(float(doc["fx"]), float(doc.get("fy", doc["fx"])), float(doc["cx"]),
                      float(doc["cy"]), np.asarray(doc["c2w"], dtype=float), int(doc["width"]),
                      int(doc["height"]), float(doc.get("near", 0.1)), float(doc.get("far", 4.0)))
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"{path}: {exc}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"{path}: bad camera spec ({exc})") from exc


def cmd_render(args) -> int:
    field = load_checkpoint(args.checkpoint)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.camera:
        cam = _camera_from_json(args.camera)
        sampling = RaySampling(args.samples or 64, cam.near, cam.far, background=args.background)
        save_png(render_view(field, cam, sampling), out / "view.png")
        print(f"wrote {out / 'view.png'}")
        return EXIT_OK
    if not args.config:
        raise ConfigError(["render: pass --config (test split) or --camera"])
    cfg = load_config(args.config)
    dataset = load_scene(cfg)
    ids = {"test": dataset.test_ids, "train": dataset.train_ids,
           "all": dataset.train_ids + dataset.test_ids}[args.split]
    ev = evaluate(field, dataset, cfg.ray_sampling(), ids)
    with open(out / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["view", "psnr", "ssim"])
        for i, img, p, s in zip(ids, ev.images, ev.psnr, ev.ssim):
            save_png(img, out / f"view_{i:03d}.png")
            w.writerow([i, repr(p), repr(s)])
    print(f"rendered {len(ids)} views, mean PSNR {ev.mean_psnr:.6f} dB, SSIM {ev.mean_ssim:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quadnerf", description=__doc__.splitlines()[0])
    p.add_argument("-q", "--quiet", action="store_true", help="only print results")
    sub = p.add_subparsers(dest="command", required=True)

    pm = sub.add_parser("probmap", help="write the sampling prior of an image as a PNG")
    pm.add_argument("image")
    pm.add_argument("out")
    pm.add_argument("--metric", choices=["std", "variance", "entropy"], default="std")
    pm.add_argument("--patch", type=int, choices=[3, 5, 7, 9], default=3)
    pm.set_defaults(func=cmd_probmap)

    tr = sub.add_parser("train", help="train with adaptive quadtree sampling")
    tr.add_argument("config")
    tr.add_argument("--no-overlays", action="store_true",
                    help="skip the per-round leaf CSV and overlay PNGs")
    tr.set_defaults(func=cmd_train)

    be = sub.add_parser("bench", help="uniform baseline versus adaptive sampling")
    be.add_argument("config")
    be.set_defaults(func=cmd_bench)

    re_ = sub.add_parser("render", help="render views from a checkpoint")
    re_.add_argument("checkpoint")
    re_.add_argument("out_dir")
    re_.add_argument("--config", help="run config whose scene provides cameras and ground truth")
    re_.add_argument("--split", choices=["test", "train", "all"], default="test")
    re_.add_argument("--camera", help="JSON camera: fx, cx, cy, width, height, c2w[, fy, near, far]")
    re_.add_argument("--samples", type=int)
    re_.add_argument("--background", choices=["white", "black", "none"], default="white")
    re_.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        for line in exc.problems:
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, IsADirectoryError, PermissionError, DatasetError,
            ImageFormatError, CheckpointError, EmptyRayPoolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NonFiniteLossError, NonFiniteGradientError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
