"""Voxel radiance fields trained with context-aware, quadtree-driven ray sampling."""

from .field import VoxelField, load_checkpoint, save_checkpoint
from .geometry import Camera, Dataset, generate_scene, default_scene, load_nerf_synthetic
from .imaging import ContextMetric, Image, load_png, probability_map
from .render import RaySampling, render_view
from .sampler import SamplerConfig, init_tree, ray_budget, sample_epoch_rays, subdivide
from .trainer import TrainConfig, baseline_uniform_train, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "Camera", "ContextMetric", "Dataset", "Image", "RaySampling", "SamplerConfig",
    "TrainConfig", "VoxelField", "baseline_uniform_train", "default_scene", "evaluate",
    "generate_scene", "init_tree", "load_checkpoint", "load_nerf_synthetic", "load_png",
    "probability_map", "ray_budget", "render_view", "sample_epoch_rays", "save_checkpoint",
    "subdivide", "train",
]
