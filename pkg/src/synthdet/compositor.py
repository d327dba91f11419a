"""Placement planning, compositing with bbox-by-construction, and parallel generation."""
from __future__ import annotations

import json
import multiprocessing as mp
import os
import random
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from PIL import Image

from . import kernels
from .annotations import AnnotationRecord, labels_text, to_normalized, write_classes, write_image_list
from .errors import SynthDetError
from .scenes import BackgroundScene
from .sprites import SpriteLibrary, tight_bbox

_U64 = 1 << 64


@dataclass(frozen=True)
class GenConfig:
    images_per_scene: int = 1
    objects_per_image_range: tuple[int, int] = (1, 3)
    min_visibility: float = 0.25
    seed_base: int = 0
    resize: str = "nearest"  # or "bilinear"

    def __post_init__(self):
        lo, hi = self.objects_per_image_range
        if self.images_per_scene < 1:
            raise SynthDetError("invalid-config", "images_per_scene must be >= 1")
        if not 1 <= lo <= hi:
            raise SynthDetError("invalid-config", "objects_per_image_range needs 1 <= min <= max")
        if not 0.0 < self.min_visibility <= 1.0:
            raise SynthDetError("invalid-config", "min_visibility must be in (0, 1]")
        if not 0 <= self.seed_base < _U64:
            raise SynthDetError("invalid-config", "seed_base must be a 64-bit unsigned integer")
        if self.resize not in ("nearest", "bilinear"):
            raise SynthDetError("invalid-config", f"unknown resize filter {self.resize!r}")


class Placement(NamedTuple):
    anchor_index: int
    category_id: int
    variant: str
    view_index: int
    scale: float


@dataclass(frozen=True)
class PlacementPlan:
    plan_id: int
    scene_id: str
    placements: tuple[Placement, ...] = ()

    def to_json(self) -> dict:
        return {"plan_id": self.plan_id, "scene_id": self.scene_id,
                "placements": [list(p) for p in self.placements]}

    @classmethod
    def from_json(cls, obj) -> "PlacementPlan":
        return cls(int(obj["plan_id"]), obj["scene_id"],
                   tuple(Placement(int(a), int(c), v, int(k), float(s))
                         for a, c, v, k, s in obj["placements"]))


def save_plans(plans, path) -> None:
    Path(path).write_text(json.dumps([p.to_json() for p in plans]) + "\n", encoding="utf-8")


def load_plans(path) -> list[PlacementPlan]:
    return [PlacementPlan.from_json(o) for o in json.loads(Path(path).read_text(encoding="utf-8"))]


def plan_one(plan_id: int, scene: BackgroundScene, library: SpriteLibrary,
             config: GenConfig) -> PlacementPlan:
    """Draw one plan; every random choice comes from an RNG seeded by ``plan_id``."""
    rng = random.Random(plan_id)
    lo, hi = config.objects_per_image_range
    count = rng.randint(lo, hi)
    placements = []
    for ai in rng.sample(range(len(scene.anchors)), count):
        anchor = scene.anchors[ai]
        cid = rng.randrange(len(library.categories))
        group = library.by_category[cid]
        sprite = group[rng.randrange(len(group))]
        scale = min(max(rng.uniform(anchor.scale_min, anchor.scale_max), anchor.scale_min), anchor.scale_max)
        placements.append(Placement(ai, cid, sprite.variant, sprite.view_index, scale))
    return PlacementPlan(plan_id, scene.scene_id, tuple(placements))


def plan_dataset(library: SpriteLibrary, scenes: Sequence[BackgroundScene],
                 config: GenConfig) -> list[PlacementPlan]:
    """``images_per_scene`` plans per scene, scene-major; ``plan_id = seed_base + index``."""
    _, hi = config.objects_per_image_range
    for scene in scenes:
        if hi > len(scene.anchors):
            raise SynthDetError(
                "too-many-objects",
                f"scene {scene.scene_id} has {len(scene.anchors)} anchors, config wants up to {hi}",
            )
    plans = []
    index = 0
    for scene in scenes:
        for _ in range(config.images_per_scene):
            plans.append(plan_one((config.seed_base + index) % _U64, scene, library, config))
            index += 1
    return plans


def validate_plan(plan: PlacementPlan, scene: BackgroundScene, library: SpriteLibrary) -> None:
    used = set()
    for p in plan.placements:
        if not 0 <= p.anchor_index < len(scene.anchors):
            raise SynthDetError("invalid-plan", f"plan {plan.plan_id}: anchor {p.anchor_index} out of range")
        if p.anchor_index in used:
            raise SynthDetError("invalid-plan", f"plan {plan.plan_id}: anchor {p.anchor_index} used twice")
        used.add(p.anchor_index)
        a = scene.anchors[p.anchor_index]
        if not a.scale_min <= p.scale <= a.scale_max:
            raise SynthDetError("invalid-plan", f"plan {plan.plan_id}: scale {p.scale} outside anchor range")
        library.get(p.category_id, p.variant, p.view_index)


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def scaled_size(bbox_w: int, bbox_h: int, scale: float, max_w: int, max_h: int) -> tuple[int, int]:
    """Target size of ``scale`` x bbox, shrunk to the footprint cap keeping aspect."""
    w, h = scale * bbox_w, scale * bbox_h
    f = min(1.0, max_w / w, max_h / h)
    return (min(max(1, _round_half_up(w * f)), max_w), min(max(1, _round_half_up(h * f)), max_h))


def resize_sprite(cutout: np.ndarray, size: tuple[int, int], method: str = "nearest") -> np.ndarray:
    """Resize an RGBA cutout to ``(width, height)``.

    Nearest neighbour samples source pixel ``floor((i + 0.5) * src / dst)``.
    Bilinear alpha is binarized at 0.5 so the support stays well defined.
    """
    tw, th = size
    sh, sw = cutout.shape[:2]
    if method == "nearest":
        cols = np.minimum(((np.arange(tw) + 0.5) * sw / tw).astype(np.int64), sw - 1)
        rows = np.minimum(((np.arange(th) + 0.5) * sh / th).astype(np.int64), sh - 1)
        return cutout[rows[:, None], cols[None, :]]
    out = np.asarray(Image.fromarray(cutout, mode="RGBA").resize((tw, th), Image.BILINEAR)).copy()
    out[..., 3] = np.where(out[..., 3] >= 128, 255, 0)
    return out


@dataclass
class PlacedObject:
    """A sprite drawn onto the canvas (kept for instrumentation)."""

    placement: Placement
    x0: int
    y0: int
    scaled: np.ndarray
    pixel_bbox: tuple[int, int, int, int]
    visible_fraction: float


def compose_detailed(scene: BackgroundScene, plan: PlacementPlan, library: SpriteLibrary,
                     min_visibility: float = 0.25, resize: str = "nearest"):
    """Like :func:`compose` but returns ``(image, placed, dropped)`` with per-object detail."""
    validate_plan(plan, scene, library)
    canvas = scene.raster.copy()
    H, W = canvas.shape[:2]
    placed, dropped = [], []
    for p in plan.placements:
        anchor = scene.anchors[p.anchor_index]
        sprite = library.get(p.category_id, p.variant, p.view_index)
        _, _, bw, bh = sprite.tight_bbox
        size = scaled_size(bw, bh, p.scale, anchor.max_width, anchor.max_height)
        scaled = resize_sprite(sprite.cropped(), size, resize)
        x0 = anchor.x - size[0] // 2
        y0 = anchor.y - size[1] // 2
        support = scaled[..., 3] > 0
        total = int(support.sum())
        xa, ya = max(x0, 0), max(y0, 0)
        xb, yb = min(x0 + size[0], W), min(y0 + size[1], H)
        visible = support[ya - y0:yb - y0, xa - x0:xb - x0] if xa < xb and ya < yb else support[:0, :0]
        n_vis = int(visible.sum())
        fraction = n_vis / total if total else 0.0
        if n_vis == 0 or fraction < min_visibility:
            dropped.append(p)
            continue
        bx, by, bbw, bbh = tight_bbox(visible)
        kernels.alpha_over(canvas, np.ascontiguousarray(scaled), x0, y0)
        placed.append(PlacedObject(p, x0, y0, scaled, (xa + bx, ya + by, bbw, bbh), fraction))
    return canvas, placed, dropped


def compose(scene: BackgroundScene, plan: PlacementPlan, library: SpriteLibrary,
            min_visibility: float = 0.25, resize: str = "nearest"):
    """Render one training image and its annotations.

    Sprites are pasted in placement order, centered on their anchors. Each
    box is the scaled sprite's own alpha support clipped to the image; later
    occluders do not shrink it. Placements with less than ``min_visibility``
    of their support inside the image are dropped.
    """
    canvas, placed, _ = compose_detailed(scene, plan, library, min_visibility, resize)
    size = (canvas.shape[1], canvas.shape[0])
    records = [AnnotationRecord(obj.placement.category_id, *to_normalized(obj.pixel_bbox, size))
               for obj in placed]
    return canvas, records


@dataclass
class DatasetReport:
    image_count: int = 0
    label_count: int = 0
    annotation_count: int = 0
    dropped_placements: int = 0
    per_category_instances: dict = field(default_factory=dict)
    wall_time_s: float = 0.0
    workers: int = 1
    seed_base: int | None = None

    def to_json(self) -> dict:
        return asdict(self)


def image_stem(plan_id: int) -> str:
    return f"{plan_id:020d}"


def encode_png(raster: np.ndarray, path) -> None:
    Image.fromarray(raster, mode="RGB").save(path, format="PNG", compress_level=6)


_STATE: dict = {}


def _init_worker(scenes, library, image_dir, min_visibility, resize):
    _STATE.update(scenes={s.scene_id: s for s in scenes}, library=library,
                  image_dir=Path(image_dir), min_visibility=min_visibility, resize=resize)


def _run_plan(plan: PlacementPlan):
    scene = _STATE["scenes"].get(plan.scene_id)
    if scene is None:
        raise SynthDetError("unknown-scene", f"plan {plan.plan_id}: scene {plan.scene_id!r}")
    image, records = compose(scene, plan, _STATE["library"], _STATE["min_visibility"], _STATE["resize"])
    stem = image_stem(plan.plan_id)
    try:
        encode_png(image, _STATE["image_dir"] / f"{stem}.png")
        with open(_STATE["image_dir"] / f"{stem}.txt", "w", encoding="ascii", newline="\n") as fh:
            fh.write(labels_text(records))
    except OSError as exc:
        raise SynthDetError("io-error", f"plan {plan.plan_id}: {exc}") from exc
    return [r.category_id for r in records], len(plan.placements) - len(records)


def _run_chunk(plans):
    return [_run_plan(p) for p in plans]


def generate(plans: Sequence[PlacementPlan], scenes: Sequence[BackgroundScene], library: SpriteLibrary,
             output_dir, workers: int = 1, min_visibility: float = 0.25, resize: str = "nearest",
             seed_base: int | None = None) -> DatasetReport:
    """Write ``images/<plan_id>.png`` + ``.txt`` per plan, ``classes.txt`` and ``train.txt``.

    Output bytes depend only on the inputs, never on ``workers`` or scheduling.
    """
    if workers < 1:
        raise SynthDetError("invalid-argument", "workers must be >= 1")
    start = time.perf_counter()
    output_dir = Path(output_dir)
    image_dir = output_dir / "images"
    try:
        image_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise SynthDetError("io-error", f"cannot create {image_dir}: {exc}") from exc
    plans = list(plans)
    init_args = (list(scenes), library, image_dir, min_visibility, resize)
    if workers == 1 or len(plans) <= 1:
        _init_worker(*init_args)
        results = _run_chunk(plans)
    else:
        chunk = max(1, min(64, len(plans) // (workers * 4)))
        chunks = [plans[i:i + chunk] for i in range(0, len(plans), chunk)]
        method = "fork" if "fork" in mp.get_all_start_methods() else "spawn"
        with ProcessPoolExecutor(max_workers=workers, mp_context=mp.get_context(method),
                                 initializer=_init_worker, initargs=init_args) as pool:
            results = [r for part in pool.map(_run_chunk, chunks) for r in part]

    counts: Counter = Counter()
    dropped = 0
    for cats, n_dropped in results:
        counts.update(cats)
        dropped += n_dropped
    write_classes(library.categories, output_dir / "classes.txt")
    write_image_list([f"images/{image_stem(p.plan_id)}.png" for p in plans], output_dir / "train.txt")
    return DatasetReport(
        image_count=len(plans),
        label_count=len(plans),
        annotation_count=sum(counts.values()),
        dropped_placements=dropped,
        per_category_instances={library.categories[c]: counts.get(c, 0)
                                for c in range(len(library.categories))},
        wall_time_s=time.perf_counter() - start,
        workers=workers,
        seed_base=seed_base,
    )


def default_workers() -> int:
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)
