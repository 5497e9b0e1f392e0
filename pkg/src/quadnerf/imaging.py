"""Images, PNG I/O and the context-based sampling prior over pixels."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from PIL import Image as PILImage
from PIL import UnidentifiedImageError

CONTEXT_KINDS = ("std", "variance", "entropy")
PATCH_SIZES = (3, 5, 7, 9)

# rows of sliding windows materialised at once in context_map
_ROW_CHUNK = 64


class ImageFormatError(ValueError):
    """Raised for unreadable or unsupported image files."""


@dataclass(frozen=True)
class Image:
    """H x W x 3 float64 color raster with channels in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if data.ndim != 3 or data.shape[2] != 3:
            raise ValueError(f"image data must be H x W x 3, got {data.shape}")
        if data.size and (data.min() < 0.0 or data.max() > 1.0):
            raise ValueError("image channels must lie in [0, 1]")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @classmethod
    def blank(cls, height: int, width: int, value: float = 1.0) -> "Image":
        return cls(np.full((height, width, 3), value))


def load_png(path) -> Image:
    """Read an 8-bit RGB or RGBA PNG. Alpha is composited over white."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    try:
        with PILImage.open(path) as im:
            im.load()
            mode = im.mode
            arr = np.asarray(im)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise ImageFormatError(f"{path}: malformed image ({exc})") from exc
    if mode not in ("RGB", "RGBA"):
        raise ImageFormatError(f"{path}: expected RGB or RGBA, got mode {mode}")
    if arr.dtype != np.uint8:
        raise ImageFormatError(f"{path}: expected 8-bit channels, got {arr.dtype}")
    rgb = arr[..., :3].astype(np.float64) / 255.0
    if mode == "RGBA":
        alpha = arr[..., 3:4].astype(np.float64) / 255.0
        rgb = np.clip(rgb * alpha + (1.0 - alpha), 0.0, 1.0)
    return Image(rgb)


def to_uint8(values: np.ndarray) -> np.ndarray:
    """Quantise [0, 1] floats to bytes with round-half-up."""
    return np.floor(np.clip(values, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_png(image: Image, path) -> None:
    path = Path(path)
    PILImage.fromarray(to_uint8(image.data), mode="RGB").save(path)


def save_gray_png(values: np.ndarray, path) -> None:
    """Write a 2D array of [0, 1] values as an 8-bit grayscale PNG."""
    PILImage.fromarray(to_uint8(values), mode="L").save(Path(path))


@dataclass(frozen=True)
class ContextMetric:
    kind: str = "std"
    patch: int = 3

    def __post_init__(self):
        if self.kind not in CONTEXT_KINDS:
            raise ValueError(f"unknown context metric {self.kind!r}; choose from {CONTEXT_KINDS}")
        if self.patch < 3 or self.patch % 2 == 0:
            raise ValueError(f"patch must be odd and >= 3, got {self.patch}")


@dataclass(frozen=True)
class ProbabilityMap:
    """Per-pixel nonnegative sampling weights."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        if w.ndim != 2:
            raise ValueError("probability map must be 2D")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("probability weights must be finite and nonnegative")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def height(self) -> int:
        return self.weights.shape[0]

    @property
    def width(self) -> int:
        return self.weights.shape[1]

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    @classmethod
    def uniform(cls, height: int, width: int) -> "ProbabilityMap":
        return cls(np.ones((height, width)))


def context_map(image: Image, metric: ContextMetric = ContextMetric()) -> np.ndarray:
    """Raw local-context map g over a patch x patch window.

    ``std`` is the RMS deviation of the RGB vectors in the window from their
    mean color (squared norm summed over channels, divided by the window
    count); ``variance`` omits the square root; ``entropy`` sums -c log c over
    every channel value in the window. Borders use replicate padding.
    """
    data = image.data
    h, w, _ = data.shape
    r = metric.patch // 2
    padded = np.pad(data, ((r, r), (r, r), (0, 0)), mode="edge")
    n = metric.patch * metric.patch
    out = np.empty((h, w))

    if metric.kind == "entropy":
        with np.errstate(divide="ignore", invalid="ignore"):
            plogp = np.where(padded > 0.0, -padded * np.log(padded), 0.0)
        per_pixel = plogp.sum(axis=2)
        windows = sliding_window_view(per_pixel, (metric.patch, metric.patch))
        out[:] = windows.sum(axis=(2, 3))
        return np.maximum(out, 0.0)

    for row in range(0, h, _ROW_CHUNK):
        stop = min(row + _ROW_CHUNK, h)
        block = padded[row : stop + 2 * r]
        win = sliding_window_view(block, (metric.patch, metric.patch), axis=(0, 1))
        # win: (rows, w, 3, p, p); differences to the center keep flat windows exactly zero
        center = data[row:stop, :, :, None, None]
        diff = (win - center).reshape(stop - row, w, 3, n)
        mean = diff.sum(axis=3) / n
        var = (diff * diff).sum(axis=3) / n - mean * mean
        out[row:stop] = np.maximum(var.sum(axis=2), 0.0)

    if metric.kind == "std":
        np.sqrt(out, out=out)
    return out


def normalize(g: np.ndarray, clamp: bool = True) -> ProbabilityMap:
    """Clamp g from below at 1% of its mean and divide by its max.

    An all-zero map has no context anywhere and falls back to uniform weights.
    ``clamp=False`` skips the floor and is meant for tests only.
    """
    g = np.asarray(g, dtype=np.float64)
    if not np.all(np.isfinite(g)) or np.any(g < 0):
        raise ValueError("context map must be finite and nonnegative")
    peak = g.max()
    if peak <= 0.0:
        return ProbabilityMap(np.ones_like(g))
    if clamp:
        floor = 0.01 * g.mean()
        g = np.maximum(g, floor)
    return ProbabilityMap(g / peak)


def probability_map(image: Image, metric: ContextMetric = ContextMetric()) -> ProbabilityMap:
    return normalize(context_map(image, metric))
