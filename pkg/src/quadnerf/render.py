"""Discrete volume rendering along rays and its exact reverse pass."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .field import GradientBuffer, VoxelField, logistic, softplus
from .imaging import Image

BACKGROUNDS = {"white": 1.0, "black": 0.0, "none": None}


class NonFiniteLossError(FloatingPointError):
    def __init__(self, message, ray_ids=()):
        super().__init__(message)
        self.ray_ids = list(ray_ids)


@dataclass(frozen=True)
class RaySampling:
    n_samples: int = 64
    near: float = 0.1
    far: float = 4.0
    jitter: bool = True
    background: str = "white"

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValueError("n_samples must be >= 2")
        if not 0.0 <= self.near < self.far:
            raise ValueError("need 0 <= near < far")
        if self.background not in BACKGROUNDS:
            raise ValueError(f"background must be one of {sorted(BACKGROUNDS)}")

    def deterministic(self) -> "RaySampling":
        return RaySampling(self.n_samples, self.near, self.far, False, self.background)


@dataclass
class RenderResult:
    color: np.ndarray          # (..., 3)
    weights: np.ndarray        # (..., N)
    transmittance: np.ndarray  # (..., N)
    residual: np.ndarray       # (...,) transmittance past the last sample
    t: np.ndarray              # (..., N)

    @property
    def opacity(self):
        return self.weights.sum(axis=-1)


def sample_distances(sampling: RaySampling, n_rays: int, rng=None):
    """Stratified distances (n_rays, N) and their spacings.

    With jitter each sample is uniform in its bin, otherwise at the bin middle.
    The last spacing runs to ``far``.
    """
    n = sampling.n_samples
    width = (sampling.far - sampling.near) / n
    lower = sampling.near + width * np.arange(n)
    if sampling.jitter:
        if rng is None:
            raise ValueError("jittered sampling needs a random generator")
        t = lower + width * rng.random((n_rays, n))
    else:
        t = np.broadcast_to(lower + 0.5 * width, (n_rays, n)).copy()
    delta = np.empty_like(t)
    delta[:, :-1] = t[:, 1:] - t[:, :-1]
    delta[:, -1] = sampling.far - t[:, -1]
    return t, delta


def composite(sigma, rgb, delta, background="white"):
    """Alpha-composite samples front to back.

    Returns ``(color, weights, transmittance, residual)``; ``residual`` is the
    transmittance left after the last sample, which carries the background.
    """
    tau = sigma * delta
    alpha = -np.expm1(-tau)
    acc = np.cumsum(tau, axis=-1)
    excl = np.zeros_like(acc)
    excl[..., 1:] = acc[..., :-1]
    trans = np.exp(-excl)
    weights = trans * alpha
    residual = np.exp(-acc[..., -1])
    color = (weights[..., None] * rgb).sum(axis=-2)
    bg = BACKGROUNDS[background]
    if bg is not None:
        color = color + residual[..., None] * bg
    return color, weights, trans, residual


def _ray_points(origins, directions, t):
    return origins[:, None, :] + t[..., None] * directions[:, None, :]


def render_rays(field, origins, directions, sampling: RaySampling, rng=None) -> RenderResult:
    """Render a batch of rays through any object with ``query(points)``."""
    origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    t, delta = sample_distances(sampling, len(origins), rng)
    rgb, sigma = field.query(_ray_points(origins, directions, t))
    color, weights, trans, residual = composite(sigma, rgb, delta, sampling.background)
    return RenderResult(color, weights, trans, residual, t)


def render_ray(field, origin, direction, sampling: RaySampling, rng=None) -> RenderResult:
    res = render_rays(field, origin, direction, sampling, rng)
    return RenderResult(res.color[0], res.weights[0], res.transmittance[0], res.residual[0], res.t[0])


def _forward_backward(field: VoxelField, origins, directions, targets, t, delta, background):
    pts = _ray_points(origins, directions, t)
    index, weight, inside = field.trilinear(pts)
    raw_d, raw_c = field.interpolate_raw(index, weight)
    sigma = np.where(inside, softplus(raw_d), 0.0)
    rgb = logistic(raw_c)
    color, weights, trans, residual = composite(sigma, rgb, delta, background)
    err = color - targets
    losses = (err * err).sum(axis=-1)

    g = 2.0 * err                                         # dL/dcolor (R, 3)
    wc = weights[..., None] * rgb                         # (R, N, 3)
    # light arriving from behind each sample: sum_{k>j} w_k c_k + residual * bg
    behind = np.cumsum(wc[:, ::-1], axis=1)[:, ::-1] - wc
    bg = BACKGROUNDS[background]
    if bg is not None:
        behind = behind + (residual * bg)[:, None, None]
    trans_next = trans * np.exp(-sigma * delta)
    d_tau = ((trans_next[..., None] * rgb - behind) * g[:, None, :]).sum(axis=-1)
    d_rawd = d_tau * delta * logistic(raw_d) * inside
    d_rawc = weights[..., None] * g[:, None, :] * rgb * (1.0 - rgb)

    d_density = weight * d_rawd[..., None]
    d_rgb = weight[..., None] * d_rawc[..., None, :]
    return losses, color, index, d_density, d_rgb


def render_rays_backward(field: VoxelField, origins, directions, targets, sampling: RaySampling,
                         grads: GradientBuffer, rng=None, scale=1.0, workers=1):
    """Per-ray squared color error, accumulating ``scale * dL/draw`` into ``grads``.

    Work is split into ``workers`` contiguous chunks whose gradients are
    reduced in chunk order, so results do not depend on thread timing.
    """
    origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    t, delta = sample_distances(sampling, len(origins), rng)

    def run(sl):
        losses, color, index, d_den, d_rgb = _forward_backward(
            field, origins[sl], directions[sl], targets[sl], t[sl], delta[sl], sampling.background)
        if not np.all(np.isfinite(losses)):
            bad = np.nonzero(~np.isfinite(losses))[0] + sl.start
            raise NonFiniteLossError(f"non-finite loss on rays {bad.tolist()[:10]}", bad)
        local = GradientBuffer.for_field(field)
        local.add_flat(index, scale * d_den, scale * d_rgb)
        return losses, local

    n = len(origins)
    workers = max(1, min(int(workers), n))
    bounds = np.linspace(0, n, workers + 1).astype(int)
    slices = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]
    if workers == 1:
        results = [run(slices[0])]
    else:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, slices))
    losses = np.concatenate([r[0] for r in results])
    for _, local in results:
        grads += local
    return losses


def render_ray_backward(field: VoxelField, origin, direction, target, sampling: RaySampling,
                        grads: GradientBuffer, rng=None) -> float:
    """Loss ``||c_hat - target||^2`` of one ray; gradients go into ``grads``."""
    return float(render_rays_backward(field, origin, direction, target, sampling, grads, rng)[0])


def render_view(field, camera, sampling: RaySampling, chunk=8192, return_opacity=False):
    """Render every pixel of ``camera`` with deterministic midpoint samples."""
    sampling = sampling.deterministic()
    origins, dirs = camera.rays()
    origins = origins.reshape(-1, 3)
    dirs = dirs.reshape(-1, 3)
    color = np.empty((len(dirs), 3))
    opacity = np.empty(len(dirs))
    for start in range(0, len(dirs), chunk):
        sl = slice(start, start + chunk)
        res = render_rays(field, origins[sl], dirs[sl], sampling)
        color[sl] = res.color
        opacity[sl] = res.opacity
    image = Image(np.clip(color, 0.0, 1.0).reshape(camera.height, camera.width, 3))
    if return_opacity:
        return image, opacity.reshape(camera.height, camera.width)
    return image
