"""Per-view quadtrees that decide where training rays are shot.

Every unmarked leaf receives as many draws as it has pixels, a fraction of
them importance-sampled from the context prior and the rest uniform. Leaves
whose mean per-ray error falls below a threshold are marked and from then on
receive only ``n0`` draws; the others are split in four at each subdivision
round. Marked leaves never change again.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np


class NodeState(enum.Enum):
    INTERNAL = "internal"
    UNMARKED = "unmarked"
    MARKED = "marked"


@dataclass(frozen=True)
class SamplerConfig:
    random_ratio: float = 0.5
    n0: int = 10
    threshold: float = 1e-3
    init_depth: int = 2
    subdivide_every: int = 3
    all_pixel_last_epoch: bool = True
    min_node_size: int = 4
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.random_ratio <= 1.0:
            raise ValueError("random_ratio must lie in [0, 1]")
        if self.n0 < 1 or self.subdivide_every < 1 or self.min_node_size < 1:
            raise ValueError("n0, subdivide_every and min_node_size must be positive")
        if self.init_depth < 0:
            raise ValueError("init_depth must be >= 0")
        if not self.threshold >= 0.0:
            raise ValueError("threshold must be >= 0")


class AliasTable:
    """Vose alias table for O(1) draws from a fixed discrete distribution."""

    def __init__(self, weights):
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
        n = len(w)
        total = w.sum()
        if n == 0 or not total > 0.0:
            raise ValueError("alias table needs positive total weight")
        scaled = w * (n / total)
        prob = np.ones(n)
        alias = np.arange(n)
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        while small and large:
            s = small.pop()
            l = large.pop()
            prob[s] = scaled[s]
            alias[s] = l
            scaled[l] = (scaled[l] + scaled[s]) - 1.0
            (small if scaled[l] < 1.0 else large).append(l)
        # leftovers are 1 up to rounding
        self.prob = prob
        self.alias = alias

    def __len__(self):
        return len(self.prob)

    def sample(self, rng, n):
        col = rng.integers(0, len(self.prob), n)
        keep = rng.random(n) < self.prob[col]
        return np.where(keep, col, self.alias[col])

    def probabilities(self):
        """Exact distribution encoded by the table."""
        n = len(self.prob)
        p = self.prob / n
        np.add.at(p, self.alias, (1.0 - self.prob) / n)
        return p


class QuadNode:
    __slots__ = ("u0", "u1", "v0", "v1", "depth", "state", "children",
                 "err_sum", "err_count", "last_error", "_alias")

    def __init__(self, u0, u1, v0, v1, depth=0):
        if u1 <= u0 or v1 <= v0:
            raise ValueError("quadtree node bounds must be non-empty")
        self.u0, self.u1, self.v0, self.v1 = u0, u1, v0, v1
        self.depth = depth
        self.state = NodeState.UNMARKED
        self.children = ()
        self.err_sum = 0.0
        self.err_count = 0
        self.last_error = math.nan
        self._alias = None

    @property
    def height(self):
        return self.u1 - self.u0

    @property
    def width(self):
        return self.v1 - self.v0

    @property
    def n_pixels(self):
        return self.height * self.width

    @property
    def is_leaf(self):
        return self.state is not NodeState.INTERNAL

    @property
    def mean_error(self):
        """Mean recorded error, NaN when no ray landed here."""
        return self.err_sum / self.err_count if self.err_count else math.nan

    def can_split(self, min_size):
        return self.height // 2 >= min_size and self.width // 2 >= min_size

    def split(self):
        um = self.u0 + (self.height + 1) // 2
        vm = self.v0 + (self.width + 1) // 2
        d = self.depth + 1
        kids = []
        for a, b in ((self.u0, um), (um, self.u1)):
            for c, e in ((self.v0, vm), (vm, self.v1)):
                kids.append(QuadNode(a, b, c, e, d))
        self.children = tuple(kids)
        self.state = NodeState.INTERNAL
        self._alias = None
        return self.children

    def reset_errors(self):
        self.err_sum = 0.0
        self.err_count = 0

    def alias_table(self, weights):
        if self._alias is None:
            self._alias = AliasTable(weights[self.u0:self.u1, self.v0:self.v1])
        return self._alias

    def __repr__(self):
        return (f"QuadNode([{self.u0},{self.u1})x[{self.v0},{self.v1}), depth={self.depth}, "
                f"{self.state.value})")


class QuadTree:
    def __init__(self, height, width, view=0, threshold=1e-3, n0=10):
        self.height = height
        self.width = width
        self.view = view
        self.threshold = threshold
        self.n0 = n0
        self.root = QuadNode(0, height, 0, width)
        self._leaves = None
        self._leaf_raster = None

    def leaves(self):
        if self._leaves is None:
            out, stack = [], [self.root]
            while stack:
                node = stack.pop()
                if node.is_leaf:
                    out.append(node)
                else:
                    stack.extend(reversed(node.children))
            self._leaves = out
        return self._leaves

    def leaf_raster(self):
        """(H, W) array holding the index into ``leaves()`` of each pixel."""
        if self._leaf_raster is None:
            r = np.full((self.height, self.width), -1, dtype=np.int64)
            for k, leaf in enumerate(self.leaves()):
                r[leaf.u0:leaf.u1, leaf.v0:leaf.v1] = k
            self._leaf_raster = r
        return self._leaf_raster

    def invalidate(self):
        self._leaves = None
        self._leaf_raster = None

    def nodes(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(node.children)

    def reset_errors(self):
        for leaf in self.leaves():
            leaf.reset_errors()

    def counts(self):
        marked = sum(1 for n in self.leaves() if n.state is NodeState.MARKED)
        return len(self.leaves()) - marked, marked


def init_tree(height, width, config: SamplerConfig, view=0) -> QuadTree:
    """Quadtree uniformly subdivided to ``config.init_depth``; ceil/floor splits."""
    side = 2 ** config.init_depth
    if height < side or width < side:
        raise ValueError(f"{height}x{width} image too small for initial depth {config.init_depth}")
    tree = QuadTree(height, width, view, config.threshold, config.n0)
    frontier = [tree.root]
    for _ in range(config.init_depth):
        frontier = [kid for node in frontier for kid in node.split()]
    return tree


@dataclass
class Draws:
    """Pixel draws of one view for one epoch."""

    view: int
    u: np.ndarray
    v: np.ndarray
    # per draw: 0 from an unmarked leaf, 1 from a marked leaf, 2 all-pixel or baseline
    source: np.ndarray = field(default=None)

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.int64)
        self.v = np.asarray(self.v, dtype=np.int64)
        if self.source is None:
            self.source = np.full(len(self.u), 2, dtype=np.int8)

    def __len__(self):
        return len(self.u)


SOURCE_UNMARKED, SOURCE_MARKED, SOURCE_FULL = 0, 1, 2


def uniform_in_rect(rng, u0, u1, v0, v1, n):
    """``n`` uniform pixel draws with replacement from a rectangle."""
    w = v1 - v0
    flat = rng.integers(0, (u1 - u0) * w, n)
    return u0 + flat // w, v0 + flat % w


def sample_epoch_rays(tree: QuadTree, prob, config: SamplerConfig, rng) -> Draws:
    """Draws for one epoch: |F| per unmarked leaf (ceil((1 - ratio)|F|) from the
    prior, the rest uniform), ``n0`` uniform draws per marked leaf."""
    weights = prob.weights if hasattr(prob, "weights") else np.asarray(prob)
    if weights.shape != (tree.height, tree.width):
        raise ValueError(f"probability map {weights.shape} does not match tree "
                         f"{(tree.height, tree.width)}")
    us, vs, srcs = [], [], []
    for leaf in tree.leaves():
        if leaf.state is NodeState.MARKED:
            u, v = uniform_in_rect(rng, leaf.u0, leaf.u1, leaf.v0, leaf.v1, config.n0)
            us.append(u)
            vs.append(v)
            srcs.append(np.full(config.n0, SOURCE_MARKED, dtype=np.int8))
            continue
        n = leaf.n_pixels
        n_prior = math.ceil((1.0 - config.random_ratio) * n)
        if n_prior:
            table = leaf.alias_table(weights)
            flat = table.sample(rng, n_prior)
            us.append(leaf.u0 + flat // leaf.width)
            vs.append(leaf.v0 + flat % leaf.width)
        if n - n_prior:
            u, v = uniform_in_rect(rng, leaf.u0, leaf.u1, leaf.v0, leaf.v1, n - n_prior)
            us.append(u)
            vs.append(v)
        srcs.append(np.full(n, SOURCE_UNMARKED, dtype=np.int8))
    if not us:
        return Draws(tree.view, np.zeros(0), np.zeros(0), np.zeros(0, dtype=np.int8))
    return Draws(tree.view, np.concatenate(us), np.concatenate(vs), np.concatenate(srcs))


def full_image_draws(view, height, width, rng, n=None) -> Draws:
    """Uniform draws with replacement over the whole image (H*W by default)."""
    n = height * width if n is None else n
    u, v = uniform_in_rect(rng, 0, height, 0, width, n)
    return Draws(view, u, v)


def all_pixel_draws(view, height, width, rng) -> Draws:
    """Every pixel exactly once, in random order."""
    flat = rng.permutation(height * width)
    return Draws(view, flat // width, flat % width)


def record_errors(tree: QuadTree, draws: Draws, losses) -> None:
    """Add each ray's loss to the leaf containing its pixel."""
    losses = np.asarray(losses, dtype=np.float64)
    if len(losses) != len(draws):
        raise ValueError("one loss per draw required")
    if len(draws) == 0:
        return
    if (draws.u.min() < 0 or draws.v.min() < 0 or draws.u.max() >= tree.height
            or draws.v.max() >= tree.width):
        raise IndexError("draw outside image")
    leaves = tree.leaves()
    ids = tree.leaf_raster()[draws.u, draws.v]
    sums = np.bincount(ids, losses, minlength=len(leaves))
    counts = np.bincount(ids, minlength=len(leaves))
    for k in np.nonzero(counts)[0]:
        leaves[k].err_sum += sums[k]
        leaves[k].err_count += int(counts[k])


class Decision(NamedTuple):
    node: QuadNode
    decision: str      # marked | split | kept-min-size | kept-no-draws
    error: float


def subdivide(tree: QuadTree, config: SamplerConfig) -> list:
    """One subdivision round over the unmarked leaves; resets error statistics."""
    report = []
    for leaf in list(tree.leaves()):
        if leaf.state is NodeState.MARKED:
            leaf.reset_errors()
            continue
        err = leaf.mean_error
        leaf.last_error = err
        if leaf.err_count == 0:
            report.append(Decision(leaf, "kept-no-draws", err))
        elif err < config.threshold:
            leaf.state = NodeState.MARKED
            leaf._alias = None
            report.append(Decision(leaf, "marked", err))
        elif leaf.can_split(config.min_node_size):
            leaf.split()
            report.append(Decision(leaf, "split", err))
        else:
            report.append(Decision(leaf, "kept-min-size", err))
        leaf.reset_errors()
    tree.invalidate()
    return report


class Budget(NamedTuple):
    unmarked: int
    marked: int
    total: int


def ray_budget(tree: QuadTree, config: SamplerConfig) -> Budget:
    unmarked = sum(n.n_pixels for n in tree.leaves() if n.state is NodeState.UNMARKED)
    marked = config.n0 * sum(1 for n in tree.leaves() if n.state is NodeState.MARKED)
    return Budget(unmarked, marked, unmarked + marked)


def uniform_depth_budget(height, width, depth, n_unmarked, n_marked, n0=10):
    """Closed-form ray count when all leaves sit at the same depth."""
    return n_unmarked * (height // 2 ** depth) * (width // 2 ** depth) + n_marked * n0
