"""Background scenes and their anchor files."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ParseError, SynthDetError


@dataclass(frozen=True)
class AnchorPoint:
    x: int
    y: int
    max_width: int
    max_height: int
    scale_min: float = 1.0
    scale_max: float = 1.0

    def __post_init__(self):
        if self.max_width < 1 or self.max_height < 1:
            raise SynthDetError("invalid-anchor", "footprint caps must be >= 1 px")
        if not 0.0 < self.scale_min <= self.scale_max:
            raise SynthDetError("invalid-anchor", "need 0 < scale_min <= scale_max")


@dataclass(frozen=True, eq=False)
class BackgroundScene:
    scene_id: str
    raster: np.ndarray  # (H, W, 3) uint8
    anchors: tuple[AnchorPoint, ...]

    def __post_init__(self):
        raster = np.asarray(self.raster)
        if raster.ndim != 3 or raster.shape[2] != 3 or raster.dtype != np.uint8:
            raise SynthDetError("invalid-scene", f"{self.scene_id}: raster must be (H, W, 3) uint8")
        anchors = tuple(self.anchors)
        if not anchors:
            raise SynthDetError("invalid-scene", f"{self.scene_id}: no anchors")
        h, w = raster.shape[:2]
        for a in anchors:
            if not (0 <= a.x < w and 0 <= a.y < h):
                raise SynthDetError("invalid-scene", f"{self.scene_id}: anchor {a} outside image")
        object.__setattr__(self, "raster", raster)
        object.__setattr__(self, "anchors", anchors)

    @property
    def size(self) -> tuple[int, int]:
        return self.raster.shape[1], self.raster.shape[0]


def read_anchors(path) -> list[AnchorPoint]:
    """Parse ``anchor x y max_w max_h scale_min scale_max`` lines."""
    anchors = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] != "anchor" or len(parts) != 7:
                raise ParseError(path, lineno, f"unrecognized line {line.strip()!r}")
            try:
                x, y, mw, mh = (int(t) for t in parts[1:5])
                smin, smax = float(parts[5]), float(parts[6])
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
            try:
                anchors.append(AnchorPoint(x, y, mw, mh, smin, smax))
            except SynthDetError as exc:
                raise ParseError(path, lineno, exc.message) from None
    return anchors


def write_anchors(anchors, path) -> None:
    Path(path).write_text(
        "".join(f"anchor {a.x} {a.y} {a.max_width} {a.max_height} {a.scale_min!r} {a.scale_max!r}\n"
                for a in anchors),
        encoding="utf-8",
    )


def load_rgb(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB")).copy()


def save_rgb(raster, path) -> None:
    Image.fromarray(np.asarray(raster, dtype=np.uint8), mode="RGB").save(path, format="PNG")


def load_scenes(directory) -> list[BackgroundScene]:
    """Load every ``<id>.png`` with a sibling ``<id>.anchors`` file, sorted by id."""
    directory = Path(directory)
    scenes = []
    for img in sorted(directory.glob("*.png")):
        anchors_path = img.with_suffix(".anchors")
        if not anchors_path.is_file():
            raise SynthDetError("missing-file", f"no anchors file for {img}")
        scenes.append(BackgroundScene(img.stem, load_rgb(img), read_anchors(anchors_path)))
    if not scenes:
        raise SynthDetError("missing-file", f"no scenes in {directory}")
    return scenes


def save_scenes(scenes, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for scene in scenes:
        save_rgb(scene.raster, directory / f"{scene.scene_id}.png")
        write_anchors(scene.anchors, directory / f"{scene.scene_id}.anchors")
