"""Where should rays go? Build context maps for a rendered view and turn them
into a sampling prior.

Run:  python demos/01_sampling_prior.py [out_dir]
"""

import sys
from pathlib import Path

import numpy as np

from quadnerf.geometry import default_scene, generate_scene
from quadnerf.imaging import ContextMetric, context_map, normalize, save_gray_png, save_png

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output") / "prior"
out.mkdir(parents=True, exist_ok=True)

# A single 64x64 view of the two-primitive scene: white background, a red
# sphere and a blue box.
scene = generate_scene(default_scene(), n_train=1, n_test=1, resolution=64, seed=3)
view = scene.images[0]
save_png(view, out / "view.png")

# Local color variation is zero on flat regions and peaks along edges.
for kind in ("std", "variance", "entropy"):
    for patch in (3, 7):
        g = context_map(view, ContextMetric(kind, patch))
        prob = normalize(g)
        save_gray_png(prob.weights, out / f"prior_{kind}_{patch}.png")
        flat = np.mean(prob.weights <= 0.011)
        print(f"{kind:8s} patch {patch}: max g = {g.max():.4f}, "
              f"{100 * flat:5.1f}% of pixels sit at the clamp floor")

# The clamp keeps every pixel reachable: flat pixels get 1% of the mean.
g = context_map(view)
print("floor weight:", normalize(g).weights.min(), "= 0.01 * mean / max =",
      0.01 * g.mean() / g.max())
print("unclamped map keeps", int(np.sum(normalize(g, clamp=False).weights == 0)),
      "zero-probability pixels")
print("wrote PNGs to", out)
