"""Epoch-synchronised training of a voxel field with quadtree ray sampling."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field as dc_field
from typing import Callable, NamedTuple

import numpy as np

from . import sampler as qs
from .field import GradientBuffer, VoxelField, sgd_step
from .imaging import ContextMetric, probability_map
from .metrics import psnr, ssim
from .render import RaySampling, render_rays, render_rays_backward, render_view

log = logging.getLogger(__name__)

SSIM_WINDOW = 11


class EmptyRayPoolError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 16
    batch_size: int = 1024
    lr: float = 2.0e4
    lr_decay: float = 0.85
    density_lr_scale: float = 100.0
    sampler: qs.SamplerConfig = qs.SamplerConfig()
    sampling: RaySampling = RaySampling()
    context: ContextMetric = ContextMetric()
    eval_every: int = 0       # 0: evaluate after the final epoch only
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.lr > 0.0:
            raise ValueError("lr must be > 0")
        if not self.lr_decay > 0.0:
            raise ValueError("lr_decay must be > 0")
        if self.eval_every < 0 or self.workers < 1:
            raise ValueError("eval_every must be >= 0 and workers >= 1")

    def lr_at(self, epoch: int) -> float:
        return self.lr * self.lr_decay ** epoch


@dataclass
class EpochLog:
    epoch: int
    rays: int
    rays_unmarked: int
    rays_marked: int
    rays_full: int
    unmarked_leaves: list = dc_field(default_factory=list)
    marked_leaves: list = dc_field(default_factory=list)
    train_loss: float = math.nan
    lr: float = math.nan
    seconds: float = 0.0
    subdivided: bool = False
    psnr: float = math.nan
    ssim: float = math.nan

    CSV_FIELDS = ("epoch", "rays", "rays_unmarked", "rays_marked", "rays_full",
                  "unmarked_leaves", "marked_leaves", "train_loss", "lr", "seconds",
                  "subdivided", "psnr", "ssim")

    def row(self) -> dict:
        d = asdict(self)
        d["unmarked_leaves"] = sum(self.unmarked_leaves)
        d["marked_leaves"] = sum(self.marked_leaves)
        d["subdivided"] = int(self.subdivided)
        for key in ("train_loss", "lr", "seconds", "psnr", "ssim"):
            d[key] = f"{d[key]:.6f}" if key == "seconds" else repr(float(d[key]))
        return d


def write_logs_csv(logs, path, include_time=True) -> None:
    fields = [f for f in EpochLog.CSV_FIELDS if include_time or f != "seconds"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        writer.writeheader()
        for entry in logs:
            writer.writerow(entry.row())


class Evaluation(NamedTuple):
    psnr: list
    ssim: list
    mean_psnr: float
    mean_ssim: float
    images: list


def evaluate(field, dataset, sampling: RaySampling, views=None) -> Evaluation:
    """Render test views deterministically and score them against ground truth."""
    views = dataset.test_ids if views is None else views
    p, s, imgs = [], [], []
    for i in views:
        img = render_view(field, dataset.cameras[i], sampling)
        imgs.append(img)
        p.append(psnr(img, dataset.images[i]))
        # views smaller than the SSIM window are scored by PSNR only
        small = min(img.height, img.width) < SSIM_WINDOW
        s.append(math.nan if small else ssim(img, dataset.images[i], size=SSIM_WINDOW))
    return Evaluation(p, s, float(np.mean(p)), float(np.mean(s)), imgs)


class TrainResult(NamedTuple):
    field: VoxelField
    logs: list
    trees: list


class _RayPool:
    """Origins, directions and targets of every train pixel, flattened."""

    def __init__(self, dataset):
        self.views = list(dataset.train_ids)
        o, d, y, self.offset, self.shape = [], [], [], [], []
        start = 0
        for i in self.views:
            cam, img = dataset.cameras[i], dataset.images[i]
            origins, dirs = cam.rays()
            o.append(origins.reshape(-1, 3))
            d.append(dirs.reshape(-1, 3))
            y.append(img.data.reshape(-1, 3))
            self.offset.append(start)
            self.shape.append((img.height, img.width))
            start += img.height * img.width
        self.origins = np.concatenate(o)
        self.dirs = np.concatenate(d)
        self.targets = np.concatenate(y)

    def flat_index(self, k, draws):
        return self.offset[k] + draws.u * self.shape[k][1] + draws.v


def _streams(seed):
    ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(3)]


def _run(dataset, field, config: TrainConfig, mode, probmaps=None,
         on_subdivide: Callable | None = None, on_epoch: Callable | None = None) -> TrainResult:
    sc = config.sampler
    pool = _RayPool(dataset)
    sample_rng, shuffle_rng, jitter_rng = _streams(config.seed)
    trees = []
    if mode == "adaptive":
        if probmaps is None:
            probmaps = [probability_map(dataset.images[i], config.context) for i in pool.views]
        trees = [qs.init_tree(h, w, sc, view=i) for i, (h, w) in zip(pool.views, pool.shape)]
    grads = GradientBuffer.for_field(field)
    logs = []
    rounds = 0

    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        last = epoch == config.epochs - 1
        full_epoch = mode == "adaptive" and sc.all_pixel_last_epoch and last
        draws = []
        for k, view in enumerate(pool.views):
            h, w = pool.shape[k]
            if mode == "uniform":
                draws.append(qs.full_image_draws(view, h, w, sample_rng))
            elif full_epoch:
                draws.append(qs.all_pixel_draws(view, h, w, sample_rng))
            else:
                trees[k].reset_errors()
                draws.append(qs.sample_epoch_rays(trees[k], probmaps[k], sc, sample_rng))
        flat = np.concatenate([pool.flat_index(k, dr) for k, dr in enumerate(draws)])
        if len(flat) == 0:
            raise EmptyRayPoolError(f"epoch {epoch}: no rays drawn")

        order = shuffle_rng.permutation(len(flat))
        losses = np.empty(len(flat))
        lr = config.lr_at(epoch)
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            idx = flat[batch]
            losses[batch] = render_rays_backward(
                field, pool.origins[idx], pool.dirs[idx], pool.targets[idx], config.sampling,
                grads, jitter_rng, scale=1.0 / len(batch), workers=config.workers)
            sgd_step(field, grads, lr, lr * config.density_lr_scale)

        subdivided = False
        if mode == "adaptive" and not full_epoch:
            pos = 0
            for k, dr in enumerate(draws):
                qs.record_errors(trees[k], dr, losses[pos:pos + len(dr)])
                pos += len(dr)
            if (epoch + 1) % sc.subdivide_every == 0:
                reports = [qs.subdivide(tree, sc) for tree in trees]
                rounds += 1
                subdivided = True
                if on_subdivide is not None:
                    on_subdivide(rounds, epoch, trees, draws, reports)
        seconds = time.perf_counter() - t0

        source = np.concatenate([dr.source for dr in draws])
        entry = EpochLog(
            epoch=epoch,
            rays=len(flat),
            rays_unmarked=int(np.sum(source == qs.SOURCE_UNMARKED)),
            rays_marked=int(np.sum(source == qs.SOURCE_MARKED)),
            rays_full=int(np.sum(source == qs.SOURCE_FULL)),
            unmarked_leaves=[t.counts()[0] for t in trees],
            marked_leaves=[t.counts()[1] for t in trees],
            train_loss=float(losses.mean()),
            lr=lr,
            seconds=seconds,
            subdivided=subdivided,
        )
        if last or (config.eval_every and (epoch + 1) % config.eval_every == 0):
            ev = evaluate(field, dataset, config.sampling)
            entry.psnr, entry.ssim = ev.mean_psnr, ev.mean_ssim
        logs.append(entry)
        log.info("[%s] epoch %d rays %d loss %.6f psnr %.3f (%.1fs)", mode, epoch, entry.rays,
                 entry.train_loss, entry.psnr, seconds)
        if on_epoch is not None:
            on_epoch(entry, trees, draws)
    return TrainResult(field, logs, trees)


def train(dataset, field, config: TrainConfig, probmaps=None, on_subdivide=None,
          on_epoch=None) -> TrainResult:
    """Train with context-prior sampling and adaptive quadtree subdivision.

    ``on_subdivide(round, epoch, trees, draws, reports)`` fires after every
    subdivision round, ``on_epoch(log, trees, draws)`` after every epoch.
    """
    return _run(dataset, field, config, "adaptive", probmaps, on_subdivide, on_epoch)


def baseline_uniform_train(dataset, field, config: TrainConfig, on_epoch=None) -> TrainResult:
    """Same loop, H*W uniform draws per view and epoch, no quadtrees."""
    return _run(dataset, field, config, "uniform", on_epoch=on_epoch)


def heldout_loss(field, dataset, n_rays, sampling: RaySampling, seed=0) -> float:
    """Mean squared color error on a fixed random subset of train pixels."""
    pool = _RayPool(dataset)
    idx = np.random.default_rng(seed).choice(len(pool.targets), n_rays, replace=False)
    res = render_rays(field, pool.origins[idx], pool.dirs[idx], sampling.deterministic())
    err = res.color - pool.targets[idx]
    return float((err * err).sum(axis=1).mean())
