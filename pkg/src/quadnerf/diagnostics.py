"""Per-leaf CSV dumps and overlay images of quadtree sampling state."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .sampler import Draws, QuadTree

LEAF_FIELDS = ("view", "depth", "u0", "v0", "u1", "v1", "state", "e_F", "draws")


def leaf_rows(tree: QuadTree, draws: Draws | None = None) -> list:
    """One dict per current leaf. ``e_F`` is the error seen at the last round."""
    counts = np.zeros(len(tree.leaves()), dtype=np.int64)
    if draws is not None and len(draws):
        ids = tree.leaf_raster()[draws.u, draws.v]
        counts = np.bincount(ids, minlength=len(counts))
    rows = []
    for leaf, n in zip(tree.leaves(), counts):
        err = leaf.last_error
        rows.append({
            "view": tree.view, "depth": leaf.depth,
            "u0": leaf.u0, "v0": leaf.v0, "u1": leaf.u1, "v1": leaf.v1,
            "state": leaf.state.value,
            "e_F": "" if math.isnan(err) else repr(float(err)),
            "draws": int(n),
        })
    return rows


def write_leaf_csv(trees, draws, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LEAF_FIELDS)
        writer.writeheader()
        for tree, dr in zip(trees, draws):
            writer.writerows(leaf_rows(tree, dr))


def error_raster(tree: QuadTree, reports=None) -> np.ndarray:
    """Per-pixel e_F. With a subdivision report, uses the errors that drove it."""
    out = np.full((tree.height, tree.width), np.nan)
    nodes = [(d.node, d.error) for d in reports] if reports else \
        [(leaf, leaf.last_error) for leaf in tree.leaves()]
    for node, err in nodes:
        out[node.u0:node.u1, node.v0:node.v1] = err
    return out


def overlay(image, tree: QuadTree, draws: Draws | None = None, reports=None,
            scale: int = 4, error_cap: float | None = None) -> np.ndarray:
    """RGB uint8 picture: dimmed image, green e_F heat, dark leaf outlines, red draws."""
    data = np.asarray(getattr(image, "data", image), dtype=np.float64)
    gray = 0.35 * (data @ np.array([0.299, 0.587, 0.114]))
    rgb = np.repeat(gray[..., None], 3, axis=-1)

    err = error_raster(tree, reports)
    known = ~np.isnan(err)
    if known.any():
        cap = error_cap if error_cap else max(float(np.nanmax(err)), 1e-12)
        rgb[..., 1] += 0.65 * np.where(known, np.clip(err / cap, 0.0, 1.0), 0.0)

    big = np.kron(rgb, np.ones((scale, scale, 1)))
    for leaf in tree.leaves():
        a, b, c, d = leaf.u0 * scale, leaf.u1 * scale, leaf.v0 * scale, leaf.v1 * scale
        big[a, c:d] = big[b - 1, c:d] = 0.15
        big[a:b, c] = big[a:b, d - 1] = 0.15

    if draws is not None and len(draws):
        off = scale // 2
        big[draws.u * scale + off, draws.v * scale + off] = (1.0, 0.0, 0.0)
    return np.floor(np.clip(big, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_overlay(path, image, tree, draws=None, reports=None, scale=4) -> None:
    PILImage.fromarray(overlay(image, tree, draws, reports, scale), mode="RGB").save(Path(path))
