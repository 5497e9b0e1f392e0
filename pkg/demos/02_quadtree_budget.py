"""How the quadtree shrinks the ray budget.

We fake a training run on one view: background pixels report a small error,
object pixels a large one. After each subdivision round the calm leaves are
marked and only get n0 rays, while the busy ones are split.

Run:  python demos/02_quadtree_budget.py [out_dir]
"""

import sys
from pathlib import Path

import numpy as np

from quadnerf.diagnostics import save_overlay, write_leaf_csv
from quadnerf.geometry import default_scene, generate_scene
from quadnerf.imaging import probability_map
from quadnerf.sampler import SamplerConfig, init_tree, ray_budget, record_errors, \
    sample_epoch_rays, subdivide

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output") / "quadtree"
out.mkdir(parents=True, exist_ok=True)

scene = generate_scene(default_scene(), 1, 1, 64, seed=3)
image, alpha = scene.images[0], scene.opacity[0]
prior = probability_map(image)
cfg = SamplerConfig()
tree = init_tree(64, 64, cfg)
rng = np.random.default_rng(0)

print(f"round 0: {len(tree.leaves())} leaves, budget {ray_budget(tree, cfg).total} rays")
for rnd in range(1, 5):
    draws = sample_epoch_rays(tree, prior, cfg, rng)
    # stand-in for per-ray training loss: tiny on background, large on the object
    err = np.where(alpha[draws.u, draws.v] > 0, 0.02, 2e-4) * rng.uniform(0.5, 1.5, len(draws))
    record_errors(tree, draws, err)
    report = subdivide(tree, cfg)
    decisions = {k: sum(d.decision == k for d in report)
                 for k in ("marked", "split", "kept-min-size")}
    b = ray_budget(tree, cfg)
    print(f"round {rnd}: {decisions}, budget {b.total} rays "
          f"({b.unmarked} on unmarked pixels + {b.marked} on marked leaves)")
    save_overlay(out / f"round{rnd}.png", image, tree, draws, report)
write_leaf_csv([tree], [draws], out / "leaves.csv")
print("overlays (red = drawn rays, green = leaf error) in", out)
