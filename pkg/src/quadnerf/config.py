"""JSON run configuration shared by the ``train``, ``bench`` and ``render`` commands.

A minimal document only needs ``scene`` and ``output_dir``::

    {"scene": {"kind": "generated", "resolution": 64}, "output_dir": "runs/demo"}

Every other section falls back to the library defaults. Unknown keys anywhere
are rejected.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .geometry import Primitive, SceneSpec, default_scene
from .imaging import ContextMetric
from .render import RaySampling
from .sampler import SamplerConfig
from .trainer import TrainConfig

WORKERS_ENV = "QUADNERF_WORKERS"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class PrimitiveDoc(_Strict):
    kind: Literal["sphere", "box"]
    center: tuple[float, float, float]
    size: Union[float, tuple[float, float, float]]
    rgb: tuple[Annotated[float, Field(ge=0, le=1)], ...] = Field(min_length=3, max_length=3)
    sigma: float = Field(ge=0)


class GeneratedScene(_Strict):
    kind: Literal["generated"]
    resolution: int = Field(64, ge=8)
    n_train: int = Field(16, ge=1)
    n_test: int = Field(4, ge=1)
    seed: int = 0
    n_samples: int = Field(256, ge=2)
    primitives: list[PrimitiveDoc] | None = Field(None, min_length=1)
    camera_radius: float = Field(2.5, gt=0)
    camera_angle_x: float = Field(0.8, gt=0, lt=3.1)
    near: float = Field(0.1, gt=0)
    far: float = Field(4.0, gt=0)

    def spec(self) -> SceneSpec:
        prims = default_scene().primitives if self.primitives is None else tuple(
            Primitive(p.kind, p.center, p.size, p.rgb, p.sigma) for p in self.primitives)
        return SceneSpec(prims, self.camera_radius, self.camera_angle_x, self.near, self.far)


class DatasetScene(_Strict):
    kind: Literal["nerf_synthetic"]
    path: str
    near: float = Field(2.0, gt=0)
    far: float = Field(6.0, gt=0)


class FieldDoc(_Strict):
    resolution: int = Field(64, ge=2)
    bound: float = Field(1.0, gt=0)


class TrainDoc(_Strict):
    epochs: int = Field(16, ge=0)
    batch_size: int = Field(1024, ge=1)
    lr: float = Field(2.0e4, gt=0)
    lr_decay: float = Field(0.85, gt=0)
    density_lr_scale: float = Field(100.0, gt=0)
    eval_every: int = Field(0, ge=0)
    seed: int = 0
    n_samples: int = Field(64, ge=2)
    background: Literal["white", "black", "none"] = "white"


class SamplerDoc(_Strict):
    random_ratio: float = Field(0.5, ge=0, le=1)
    n0: int = Field(10, ge=1)
    threshold: float = Field(1e-3, ge=0)
    init_depth: int = Field(2, ge=0)
    subdivide_every: int = Field(3, ge=1)
    all_pixel_last_epoch: bool = True
    min_node_size: int = Field(4, ge=1)


class ContextDoc(_Strict):
    metric: Literal["std", "variance", "entropy"] = "std"
    patch: Literal[3, 5, 7, 9] = 3


class RunConfig(_Strict):
    scene: Annotated[Union[GeneratedScene, DatasetScene], Field(discriminator="kind")]
    output_dir: str
    field: FieldDoc = FieldDoc()
    train: TrainDoc = TrainDoc()
    sampler: SamplerDoc = SamplerDoc()
    context: ContextDoc = ContextDoc()
    workers: int | None = Field(None, ge=1)

    def near_far(self):
        return self.scene.near, self.scene.far

    def ray_sampling(self) -> RaySampling:
        near, far = self.near_far()
        return RaySampling(self.train.n_samples, near, far, True, self.train.background)

    def train_config(self, workers: int | None = None) -> TrainConfig:
        t = self.train
        return TrainConfig(
            epochs=t.epochs, batch_size=t.batch_size, lr=t.lr, lr_decay=t.lr_decay,
            density_lr_scale=t.density_lr_scale,
            sampler=SamplerConfig(**self.sampler.model_dump(), seed=t.seed),
            sampling=self.ray_sampling(),
            context=ContextMetric(self.context.metric, self.context.patch),
            eval_every=t.eval_every, seed=t.seed,
            workers=workers or resolve_workers(self.workers),
        )

    def dumps(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True)


class ConfigError(ValueError):
    """Validation failure carrying every problem found, one per line."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("\n".join(self.problems))


def _describe(err) -> str:
    loc = ".".join(str(p) for p in err["loc"]) or "<root>"
    if err["type"] == "missing":
        return f"{loc}: required key missing"
    if err["type"] == "extra_forbidden":
        return f"{loc}: unknown key"
    return f"{loc}: {err['msg']}"


def parse_config(doc) -> RunConfig:
    """Validate a mapping or JSON string, listing all errors at once."""
    try:
        if isinstance(doc, (str, bytes)):
            cfg = RunConfig.model_validate_json(doc)
        else:
            cfg = RunConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError(_describe(e) for e in exc.errors()) from None
    near, far = cfg.near_far()
    if not near < far:
        raise ConfigError(["scene: need near < far"])
    return cfg


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())


def resolve_workers(configured: int | None) -> int:
    """Environment override first, then the config key, then every core."""
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError([f"{WORKERS_ENV}: not an integer: {env!r}"]) from None
        if n < 1:
            raise ConfigError([f"{WORKERS_ENV}: must be >= 1"])
        return n
    return configured or os.cpu_count() or 1
