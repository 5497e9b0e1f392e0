"""Datasets on disk: write a generated scene in the NeRF-synthetic layout,
read it back, and drive the command line from a JSON config.

Run:  python demos/05_dataset_files.py [out_dir]
"""

import json
import sys
from pathlib import Path

import numpy as np

from quadnerf.cli import main
from quadnerf.geometry import default_scene, generate_scene, load_nerf_synthetic, \
    save_nerf_synthetic

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output") / "dataset"
scene = generate_scene(default_scene(), n_train=8, n_test=2, resolution=32, seed=4)
save_nerf_synthetic(scene, out / "scene")
print("wrote", sorted(p.name for p in (out / "scene").iterdir()))

back = load_nerf_synthetic(out / "scene", near=0.1, far=4.0)
pose_err = max(np.abs(a.c2w - b.c2w).max() for a, b in zip(scene.cameras, back.cameras))
print(f"reloaded {len(back.images)} views, largest pose difference {pose_err:.1e}")

config = {
    "scene": {"kind": "nerf_synthetic", "path": str(out / "scene"), "near": 0.1, "far": 4.0},
    "output_dir": str(out / "run"),
    "field": {"resolution": 32},
    "train": {"epochs": 8, "batch_size": 512, "density_lr_scale": 10.0},
    "workers": 1,
}
(out / "config.json").write_text(json.dumps(config, indent=2))
code = main(["train", str(out / "config.json")])
print("train exit code", code, "->", sorted(p.name for p in (out / "run").iterdir()))
code = main(["render", str(out / "run" / "field.bin"), str(out / "renders"),
             "--config", str(out / "config.json")])
print("render exit code", code)
