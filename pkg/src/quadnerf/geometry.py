"""Pinhole cameras, per-pixel rays, NeRF-synthetic datasets and a procedural scene."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imaging import Image, load_png, save_png


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Camera:
    """Pinhole camera; ``c2w`` maps camera coordinates (looking down -z) to world."""

    fx: float
    fy: float
    cx: float
    cy: float
    c2w: np.ndarray
    width: int
    height: int
    near: float = 0.1
    far: float = 4.0

    def __post_init__(self):
        c2w = np.array(self.c2w, dtype=np.float64)
        if c2w.shape == (3, 4):
            c2w = np.vstack([c2w, [0.0, 0.0, 0.0, 1.0]])
        if c2w.shape != (4, 4):
            raise ValueError(f"pose must be 4x4, got {c2w.shape}")
        rot = c2w[:3, :3]
        if not np.allclose(rot.T @ rot, np.eye(3), atol=1e-6, rtol=0.0):
            raise ValueError("pose rotation block is not orthonormal")
        if not 0.0 < self.near < self.far:
            raise ValueError("need 0 < near < far")
        c2w.setflags(write=False)
        object.__setattr__(self, "c2w", c2w)

    @property
    def position(self) -> np.ndarray:
        return self.c2w[:3, 3].copy()

    def camera_directions(self, u, v):
        """Unnormalised camera-space directions through pixel centers."""
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        return np.stack(
            [(v + 0.5 - self.cx) / self.fx, -(u + 0.5 - self.cy) / self.fy, -np.ones_like(u)],
            axis=-1,
        )

    def rays(self):
        """Origins and unit directions for every pixel, each (H, W, 3)."""
        u, v = np.meshgrid(np.arange(self.height), np.arange(self.width), indexing="ij")
        d = self.camera_directions(u, v) @ self.c2w[:3, :3].T
        d /= np.linalg.norm(d, axis=-1, keepdims=True)
        o = np.broadcast_to(self.c2w[:3, 3], d.shape).copy()
        return o, d


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    pixel: tuple = (0, 0)
    view: int = 0
    target: np.ndarray | None = None


def pixel_ray(camera: Camera, u: int, v: int) -> Ray:
    """Ray through the center of pixel (row u, column v)."""
    if not (0 <= u < camera.height and 0 <= v < camera.width):
        raise IndexError(f"pixel ({u}, {v}) outside {camera.height}x{camera.width} image")
    d = camera.c2w[:3, :3] @ camera.camera_directions(u, v)
    return Ray(camera.position, d / np.linalg.norm(d), (u, v))


@dataclass
class Dataset:
    images: list
    cameras: list
    train_ids: list
    test_ids: list
    # per-view accumulated opacity of the ground truth, when known
    opacity: list | None = None

    def __post_init__(self):
        if len(self.images) != len(self.cameras):
            raise DatasetError("images and cameras must align one-to-one")
        if not self.images:
            raise DatasetError("dataset has no views")
        ids = sorted(self.train_ids) + sorted(self.test_ids)
        if sorted(ids) != list(range(len(self.images))):
            raise DatasetError("train/test split must be disjoint and cover all views")
        if not self.train_ids or not self.test_ids:
            raise DatasetError("need at least one train and one test view")
        for img, cam in zip(self.images, self.cameras):
            if (img.height, img.width) != (cam.height, cam.width):
                raise DatasetError("image size does not match camera")

    def train(self):
        return [(i, self.images[i], self.cameras[i]) for i in self.train_ids]

    def test(self):
        return [(i, self.images[i], self.cameras[i]) for i in self.test_ids]


def focal_from_angle(width: float, camera_angle_x: float) -> float:
    return 0.5 * width / math.tan(0.5 * camera_angle_x)


def _read_split(root: Path, name: str):
    path = root / f"transforms_{name}.json"
    if not path.exists():
        raise DatasetError(f"missing {path}")
    try:
        meta = json.loads(path.read_text())
        angle = float(meta["camera_angle_x"])
        frames = list(meta["frames"])
        angle_y = meta.get("camera_angle_y")
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"{path}: malformed transforms file ({exc})") from exc
    out = []
    for fr in frames:
        try:
            rel = fr["file_path"]
            pose = np.asarray(fr["transform_matrix"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"{path}: malformed frame ({exc})") from exc
        img_path = root / rel
        if img_path.suffix == "":
            img_path = img_path.with_suffix(".png")
        if not img_path.exists():
            raise DatasetError(f"missing image {img_path}")
        out.append((img_path, pose))
    return angle, angle_y, out


def load_nerf_synthetic(root, near=2.0, far=6.0) -> Dataset:
    """Load ``transforms_{train,test}.json`` with camera-to-world poses."""
    root = Path(root)
    images, cameras, train_ids, test_ids = [], [], [], []
    for split, ids in (("train", train_ids), ("test", test_ids)):
        angle, angle_y, frames = _read_split(root, split)
        for img_path, pose in frames:
            img = load_png(img_path)
            fx = focal_from_angle(img.width, angle)
            fy = fx
            if img.width != img.height:
                if angle_y is not None:
                    fy = focal_from_angle(img.height, float(angle_y))
                warnings.warn(f"{img_path.name}: non-square image, using fx={fx:.3f} fy={fy:.3f}")
            try:
                cam = Camera(fx, fy, 0.5 * img.width, 0.5 * img.height, pose,
                             img.width, img.height, near, far)
            except ValueError as exc:
                raise DatasetError(f"{img_path}: {exc}") from exc
            ids.append(len(images))
            images.append(img)
            cameras.append(cam)
    if not images:
        raise DatasetError("dataset has no views")
    return Dataset(images, cameras, train_ids, test_ids)


def save_nerf_synthetic(dataset: Dataset, root) -> None:
    """Write PNGs plus transforms JSON; assumes fx == fy and a shared horizontal fov."""
    root = Path(root)
    for split, ids in (("train", dataset.train_ids), ("test", dataset.test_ids)):
        (root / split).mkdir(parents=True, exist_ok=True)
        frames = []
        for k, i in enumerate(ids):
            rel = f"./{split}/r_{k}"
            save_png(dataset.images[i], root / f"{rel}.png")
            frames.append({"file_path": rel, "transform_matrix": dataset.cameras[i].c2w.tolist()})
        cam = dataset.cameras[ids[0]]
        angle = 2.0 * math.atan(0.5 * cam.width / cam.fx)
        doc = {"camera_angle_x": angle, "frames": frames}
        (root / f"transforms_{split}.json").write_text(json.dumps(doc, indent=2))


# ---------------------------------------------------------------------------
# procedural scenes

@dataclass(frozen=True)
class Primitive:
    kind: str                 # "sphere" or "box"
    center: tuple
    size: float | tuple       # radius, or half extent (scalar or per axis)
    rgb: tuple
    sigma: float

    def __post_init__(self):
        if self.kind not in ("sphere", "box"):
            raise ValueError(f"unknown primitive kind {self.kind!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if any(not 0.0 <= c <= 1.0 for c in self.rgb):
            raise ValueError("rgb must lie in [0, 1]")

    def contains(self, points):
        rel = points - np.asarray(self.center, dtype=np.float64)
        if self.kind == "sphere":
            return (rel * rel).sum(axis=-1) <= float(self.size) ** 2
        half = np.broadcast_to(np.asarray(self.size, dtype=np.float64), (3,))
        return np.all(np.abs(rel) <= half, axis=-1)


@dataclass(frozen=True)
class SceneSpec:
    primitives: tuple
    camera_radius: float = 2.5
    camera_angle_x: float = 0.8
    near: float = 0.1
    far: float = 4.0
    min_elevation: float = -0.25
    max_elevation: float = 1.1


def default_scene() -> SceneSpec:
    """Red sphere next to a blue box inside the unit cube."""
    return SceneSpec((
        Primitive("sphere", (0.2, 0.15, 0.1), 0.38, (0.9, 0.15, 0.1), 15.0),
        Primitive("box", (-0.3, -0.25, -0.1), (0.25, 0.22, 0.3), (0.1, 0.3, 0.85), 15.0),
    ))


class AnalyticField:
    """Piecewise-constant field: primitive interiors carry their sigma and color.

    Where primitives overlap, densities add and colors mix by density.
    """

    def __init__(self, primitives):
        self.primitives = tuple(primitives)

    def query(self, points):
        points = np.asarray(points, dtype=np.float64)
        sigma = np.zeros(points.shape[:-1])
        weighted = np.zeros(points.shape)
        for p in self.primitives:
            s = np.where(p.contains(points), p.sigma, 0.0)
            sigma += s
            weighted += s[..., None] * np.asarray(p.rgb, dtype=np.float64)
        rgb = np.divide(weighted, sigma[..., None], out=np.ones_like(weighted),
                        where=sigma[..., None] > 0)
        return rgb, sigma


def look_at(position, target=(0.0, 0.0, 0.0), up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Camera-to-world pose at ``position`` whose -z axis points at ``target``."""
    position = np.asarray(position, dtype=np.float64)
    back = position - np.asarray(target, dtype=np.float64)
    back /= np.linalg.norm(back)
    up = np.asarray(up, dtype=np.float64)
    if abs(back @ up) > 1.0 - 1e-9:
        up = np.array([0.0, 1.0, 0.0])
    right = np.cross(up, back)
    right /= np.linalg.norm(right)
    true_up = np.cross(back, right)
    pose = np.eye(4)
    pose[:3, 0], pose[:3, 1], pose[:3, 2], pose[:3, 3] = right, true_up, back, position
    return pose


def sphere_cameras(n, spec: SceneSpec, resolution, rng):
    cams = []
    f = focal_from_angle(resolution, spec.camera_angle_x)
    for _ in range(n):
        az = rng.uniform(0.0, 2.0 * math.pi)
        el = rng.uniform(spec.min_elevation, spec.max_elevation)
        pos = spec.camera_radius * np.array(
            [math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)])
        cams.append(Camera(f, f, 0.5 * resolution, 0.5 * resolution, look_at(pos),
                           resolution, resolution, spec.near, spec.far))
    return cams


def generate_scene(spec: SceneSpec, n_train=16, n_test=4, resolution=64, seed=0,
                   n_samples=256) -> Dataset:
    """Render ground-truth views of an analytic scene from cameras on a sphere.

    Uses the same compositing code as training with midpoint samples over
    the camera's [near, far] and a white background.
    """
    from .render import RaySampling, render_view

    if not spec.primitives:
        raise ValueError("scene needs at least one primitive")
    if resolution < 8:
        raise ValueError("resolution must be >= 8")
    if n_train < 1 or n_test < 1:
        raise ValueError("need at least one train and one test view")
    rng = np.random.default_rng(seed)
    cameras = sphere_cameras(n_train + n_test, spec, resolution, rng)
    gt = AnalyticField(spec.primitives)
    sampling = RaySampling(n_samples, spec.near, spec.far, jitter=False, background="white")
    images, opacity = [], []
    for cam in cameras:
        img, alpha = render_view(gt, cam, sampling, return_opacity=True)
        images.append(img)
        opacity.append(alpha)
    return Dataset(images, cameras, list(range(n_train)),
                   list(range(n_train, n_train + n_test)), opacity)
