"""Dense voxel radiance field with trilinear lookup and analytic gradients.

Density is ``softplus`` of the interpolated raw value, color is the logistic
function of the interpolated raw rgb. The field is view independent.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CHECKPOINT_MAGIC = b"QNVF"
CHECKPOINT_VERSION = 1
# magic, version, D, lo xyz, hi xyz
_HEADER = struct.Struct("<4sII6d")

# 8 corner offsets of a cell, x-major
CORNERS = np.array(
    [[i, j, k] for i in (0, 1) for j in (0, 1) for k in (0, 1)], dtype=np.int64
)


class CheckpointError(ValueError):
    pass


class NonFiniteGradientError(FloatingPointError):
    pass


def softplus(x):
    return np.logaddexp(0.0, x)


def logistic(x):
    # numerically safe for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class VoxelField:
    """D^3 vertices of (raw density, raw rgb) spanning an axis-aligned box."""

    def __init__(self, resolution=64, bounds=((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0)),
                 init_density=-2.0, init_rgb=0.0):
        if resolution < 2:
            raise ValueError("resolution must be >= 2")
        lo, hi = (np.asarray(b, dtype=np.float64) for b in bounds)
        if lo.shape != (3,) or hi.shape != (3,) or np.any(hi <= lo):
            raise ValueError(f"invalid bounds {bounds}")
        self.resolution = int(resolution)
        self.lo = lo
        self.hi = hi
        d = self.resolution
        self.raw_density = np.full((d, d, d), float(init_density))
        self.raw_rgb = np.full((d, d, d, 3), float(init_rgb))

    @property
    def bounds(self):
        return self.lo.copy(), self.hi.copy()

    @property
    def n_vertices(self) -> int:
        return self.resolution ** 3

    def copy(self) -> "VoxelField":
        out = VoxelField.__new__(VoxelField)
        out.resolution = self.resolution
        out.lo = self.lo.copy()
        out.hi = self.hi.copy()
        out.raw_density = self.raw_density.copy()
        out.raw_rgb = self.raw_rgb.copy()
        return out

    def vertex_position(self, i, j, k) -> np.ndarray:
        step = (self.hi - self.lo) / (self.resolution - 1)
        return self.lo + step * np.array([i, j, k], dtype=np.float64)

    def trilinear(self, points):
        """Corner indices and weights for ``points`` of shape (..., 3).

        Returns ``(index, weight, inside)`` with ``index``/``weight`` of shape
        (..., 8). Indices address the flattened vertex arrays. Points outside
        the box get weight 0 and ``inside`` False.
        """
        points = np.asarray(points, dtype=np.float64)
        d = self.resolution
        g = (points - self.lo) / (self.hi - self.lo) * (d - 1)
        inside = np.all((g >= 0.0) & (g <= d - 1), axis=-1)
        g = np.clip(g, 0.0, d - 1)
        base = np.minimum(np.floor(g).astype(np.int64), d - 2)
        frac = g - base

        fx, fy, fz = frac[..., 0:1], frac[..., 1:2], frac[..., 2:3]
        cx, cy, cz = CORNERS[:, 0], CORNERS[:, 1], CORNERS[:, 2]
        weight = (
            np.where(cx, fx, 1.0 - fx)
            * np.where(cy, fy, 1.0 - fy)
            * np.where(cz, fz, 1.0 - fz)
        )
        weight *= inside[..., None]
        flat = (base[..., 0] * d + base[..., 1]) * d + base[..., 2]
        offsets = (cx * d + cy) * d + cz
        index = flat[..., None] + offsets
        return index, weight, inside

    def interpolate_raw(self, index, weight):
        raw_d = (self.raw_density.reshape(-1)[index] * weight).sum(axis=-1)
        rgb_flat = self.raw_rgb.reshape(-1, 3)
        raw_c = (rgb_flat[index] * weight[..., None]).sum(axis=-2)
        return raw_d, raw_c

    def query(self, points):
        """Color and density at ``points`` (..., 3). Outside the box sigma is 0."""
        index, weight, inside = self.trilinear(points)
        raw_d, raw_c = self.interpolate_raw(index, weight)
        sigma = np.where(inside, softplus(raw_d), 0.0)
        return logistic(raw_c), sigma

    def query_with_grads(self, position):
        """Single-point query plus derivatives w.r.t. the 8 corner raw values.

        Returns ``(rgb, sigma, grads)`` where ``grads`` holds ``index`` (8,),
        ``weight`` (8,), ``dsigma`` (8,) = d sigma / d raw_density[corner] and
        ``drgb`` (8, 3) = d rgb[c] / d raw_rgb[corner, c] (the color Jacobian is
        diagonal in the channel).
        """
        index, weight, inside = self.trilinear(np.asarray(position, dtype=np.float64))
        raw_d, raw_c = self.interpolate_raw(index, weight)
        rgb = logistic(raw_c)
        if not inside:
            return rgb, 0.0, {
                "index": index, "weight": weight,
                "dsigma": np.zeros(8), "drgb": np.zeros((8, 3)),
            }
        sigma = float(softplus(raw_d))
        return rgb, sigma, {
            "index": index,
            "weight": weight,
            "dsigma": weight * logistic(raw_d),
            "drgb": weight[:, None] * (rgb * (1.0 - rgb))[None, :],
        }


@dataclass
class GradientBuffer:
    """Accumulated loss gradients, same shapes as the field parameters."""

    density: np.ndarray
    rgb: np.ndarray

    @classmethod
    def for_field(cls, field: VoxelField) -> "GradientBuffer":
        return cls(np.zeros_like(field.raw_density), np.zeros_like(field.raw_rgb))

    def zero(self) -> None:
        self.density.fill(0.0)
        self.rgb.fill(0.0)

    def add_flat(self, index, d_density, d_rgb) -> None:
        """Scatter-add per-corner contributions given flat vertex indices."""
        n = self.density.size
        index = np.asarray(index).reshape(-1)
        self.density.reshape(-1)[:] += np.bincount(index, np.asarray(d_density).reshape(-1), minlength=n)
        d_rgb = np.asarray(d_rgb).reshape(-1, 3)
        rgb = self.rgb.reshape(-1, 3)
        for c in range(3):
            rgb[:, c] += np.bincount(index, d_rgb[:, c], minlength=n)

    def __iadd__(self, other: "GradientBuffer"):
        self.density += other.density
        self.rgb += other.rgb
        return self

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.density)) and np.all(np.isfinite(self.rgb)))


def sgd_step(field: VoxelField, grads: GradientBuffer, lr: float, density_lr: float | None = None) -> None:
    """raw <- raw - lr * grad, then zero the buffer.

    ``density_lr`` overrides the step size of the density parameters. A
    non-finite gradient or an overflowing update aborts the step, leaving
    the field untouched.
    """
    if not grads.is_finite():
        raise NonFiniteGradientError("non-finite gradient; step aborted")
    density_lr = lr if density_lr is None else density_lr
    with np.errstate(over="ignore", invalid="ignore"):
        new_density = field.raw_density - density_lr * grads.density if density_lr else None
        new_rgb = field.raw_rgb - lr * grads.rgb if lr else None
    for arr in (new_density, new_rgb):
        if arr is not None and not np.all(np.isfinite(arr)):
            raise NonFiniteGradientError("update overflows; step aborted")
    if new_density is not None:
        field.raw_density[...] = new_density
    if new_rgb is not None:
        field.raw_rgb[...] = new_rgb
    grads.zero()


def save_checkpoint(field: VoxelField, path) -> None:
    """Little-endian layout: header (magic, u32 version, u32 D, 6 f64 bounds)
    followed by raw_density (D^3 f64, x-major) and raw_rgb (D^3 x 3 f64)."""
    header = _HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, field.resolution,
                          *field.lo, *field.hi)
    with open(Path(path), "wb") as fh:
        fh.write(header)
        fh.write(field.raw_density.astype("<f8").tobytes(order="C"))
        fh.write(field.raw_rgb.astype("<f8").tobytes(order="C"))


def load_checkpoint(path) -> VoxelField:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise CheckpointError(f"{path}: truncated checkpoint header")
    magic, version, d, *b = _HEADER.unpack_from(blob)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    if d < 2:
        raise CheckpointError(f"{path}: invalid resolution {d}")
    expected = _HEADER.size + 8 * 4 * d ** 3
    if len(blob) != expected:
        raise CheckpointError(f"{path}: expected {expected} bytes, found {len(blob)}")
    try:
        field = VoxelField(d, (b[:3], b[3:]))
    except ValueError as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
    off = _HEADER.size
    n = d ** 3
    field.raw_density = np.frombuffer(blob, "<f8", n, off).reshape(d, d, d).astype(np.float64)
    field.raw_rgb = np.frombuffer(blob, "<f8", 3 * n, off + 8 * n).reshape(d, d, d, 3).astype(np.float64)
    return field
