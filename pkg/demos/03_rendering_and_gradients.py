"""Volume rendering a voxel field and checking its analytic gradients.

Run:  python demos/03_rendering_and_gradients.py [out_dir]
"""

import sys
from pathlib import Path

import numpy as np

from quadnerf.field import GradientBuffer, VoxelField
from quadnerf.geometry import AnalyticField, Camera, default_scene, look_at
from quadnerf.imaging import save_png
from quadnerf.render import RaySampling, render_ray, render_ray_backward, render_view

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output") / "render"
out.mkdir(parents=True, exist_ok=True)

# Ground truth: the analytic scene through the same compositing code.
cam = Camera(80.0, 80.0, 48.0, 48.0, look_at([2.2, -1.0, 0.9]), 96, 96)
gt = AnalyticField(default_scene().primitives)
save_png(render_view(gt, cam, RaySampling(256)), out / "analytic.png")

# The learnable field starts almost transparent and mid-gray.
field = VoxelField(32)
img = render_view(field, cam, RaySampling(64))
save_png(img, out / "initial_field.png")
print("initial field mean color", img.data.mean(axis=(0, 1)).round(3))

# One ray, rendered and differentiated.
rng = np.random.default_rng(1)
field.raw_density = rng.uniform(-3, 2, field.raw_density.shape)
origin, direction = cam.position, -cam.c2w[:3, 2]
sampling = RaySampling(48, jitter=False)
res = render_ray(field, origin, direction, sampling)
print(f"weights sum {res.weights.sum():.6f} + residual {res.residual:.6f} = "
      f"{res.weights.sum() + res.residual:.12f}")

target = np.array([0.9, 0.15, 0.1])
grads = GradientBuffer.for_field(field)
loss = render_ray_backward(field, origin, direction, target, sampling, grads)
flat = grads.density.reshape(-1)
k = int(np.argmax(np.abs(flat)))
h = 1e-5
raw = field.raw_density.reshape(-1)
raw[k] += h
up = ((render_ray(field, origin, direction, sampling).color - target) ** 2).sum()
raw[k] -= 2 * h
down = ((render_ray(field, origin, direction, sampling).color - target) ** 2).sum()
raw[k] += h
print(f"loss {loss:.5f}; largest density gradient {flat[k]:.6e}, "
      f"central difference {(up - down) / (2 * h):.6e}")
