"""Pipeline configuration: one JSON file, relative paths resolved against it."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .ace import FULL, AceParams
from .compositor import GenConfig
from .errors import ConfigError, SynthDetError
from .mesh import ViewSpec


@dataclass
class ObjectSource:
    name: str
    upright: Path
    flipped: Path | None = None


@dataclass
class PipelineConfig:
    objects: list[ObjectSource] = field(default_factory=list)
    scenes_dir: Path | None = None
    work_dir: Path = Path("work")
    output_dir: Path = Path("dataset")
    azimuth_count: int = 24
    elevations: list[float] = field(default_factory=lambda: [15.0, 35.0, 55.0])
    view: ViewSpec = field(default_factory=ViewSpec)
    ace: AceParams = field(default_factory=AceParams)
    ace_variants: int = 1
    gen: GenConfig = field(default_factory=GenConfig)
    shrinkage: float = 0.1
    quantile: float = 0.99
    workers: int = 1

    @property
    def sprite_dir(self) -> Path:
        return self.work_dir / "sprites"

    @property
    def manifest_path(self) -> Path:
        return self.sprite_dir / "manifest.txt"

    @property
    def equalized_dir(self) -> Path:
        return self.work_dir / "scenes"

    @property
    def plans_path(self) -> Path:
        return self.work_dir / "plans.json"

    def validate(self) -> "PipelineConfig":
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        for obj in self.objects:
            for p in (obj.upright, obj.flipped):
                if p is not None and not p.is_file():
                    raise ConfigError(f"mesh file not found: {p}")
        if self.scenes_dir is not None and not self.scenes_dir.is_dir():
            raise ConfigError(f"scenes directory not found: {self.scenes_dir}")
        return self


def _resolve(base: Path, value) -> Path | None:
    if value is None:
        return None
    p = Path(value)
    return p if p.is_absolute() else base / p


def load_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """Read the JSON config (if any) and apply flag overrides; flags win."""
    raw: dict = {}
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        base = path.parent
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        node = raw
        *parents, leaf = dotted.split(".")
        for key in parents:
            node = node.setdefault(key, {})
        node[leaf] = value

    try:
        views = raw.get("views", {})
        ace = raw.get("ace", {})
        gen = raw.get("gen", {})
        openset = raw.get("openset", {})
        samples = ace.get("sample_count", 1024)
        return PipelineConfig(
            objects=[ObjectSource(o["name"], _resolve(base, o["upright"]), _resolve(base, o.get("flipped")))
                     for o in raw.get("objects", [])],
            scenes_dir=_resolve(base, raw.get("scenes_dir")),
            work_dir=_resolve(base, raw.get("work_dir", "work")),
            output_dir=_resolve(base, raw.get("output_dir", "dataset")),
            azimuth_count=int(views.get("azimuth_count", 24)),
            elevations=[float(e) for e in views.get("elevations", [15, 35, 55])],
            view=ViewSpec(0.0, 0.0, tuple(int(v) for v in views.get("image_size", (128, 128))),
                          float(views.get("fit_margin", 0.05)), bool(views.get("supersample", False))),
            ace=AceParams(float(ace.get("slope", 5.0)), samples if samples == FULL else int(samples),
                          int(ace.get("seed", 0))),
            ace_variants=int(ace.get("variants_per_background", 1)),
            gen=GenConfig(int(gen.get("images_per_scene", 1)),
                          tuple(int(v) for v in gen.get("objects_per_image_range", (1, 3))),
                          float(gen.get("min_visibility", 0.25)), int(gen.get("seed_base", 0)),
                          gen.get("resize", "nearest")),
            shrinkage=float(openset.get("shrinkage", 0.1)),
            quantile=float(openset.get("quantile", 0.99)),
            workers=int(raw.get("workers", 1)),
        )
    except SynthDetError as exc:
        raise ConfigError(str(exc)) from None
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc!r}") from None
