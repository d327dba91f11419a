"""Object cutouts: background keying, sprite validation and the sprite library."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

from .errors import ParseError, SynthDetError

VARIANTS = ("upright", "flipped")


def tight_bbox(alpha: np.ndarray) -> tuple[int, int, int, int] | None:
    """Minimal ``(x_min, y_min, width, height)`` around ``alpha > 0``, or None if empty."""
    mask = np.asarray(alpha) > 0
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(mask.any(axis=0))
    return (int(cols[0]), int(rows[0]), int(cols[-1] - cols[0] + 1), int(rows[-1] - rows[0] + 1))


@dataclass(frozen=True, eq=False)
class SpriteView:
    """RGBA cutout of one object from one viewpoint.

    ``raster`` is ``(H, W, 4)`` uint8 with alpha in 0..255. ``tight_bbox`` is
    computed from the alpha channel when omitted and checked when given.
    """

    category_id: int
    variant: str
    view_index: int
    raster: np.ndarray
    tight_bbox: tuple[int, int, int, int] | None = field(default=None)

    def __post_init__(self):
        raster = np.asarray(self.raster)
        if raster.ndim != 3 or raster.shape[2] != 4 or raster.dtype != np.uint8:
            raise SynthDetError("invalid-sprite", "raster must be (H, W, 4) uint8")
        if self.variant not in VARIANTS:
            raise SynthDetError("invalid-sprite", f"unknown variant {self.variant!r}")
        if self.category_id < 0 or self.view_index < 0:
            raise SynthDetError("invalid-sprite", "category_id and view_index must be >= 0")
        bbox = tight_bbox(raster[..., 3])
        if bbox is None:
            raise SynthDetError("empty-sprite", f"sprite {self.key} has no opaque pixel")
        if self.tight_bbox is not None and tuple(self.tight_bbox) != bbox:
            raise SynthDetError(
                "bbox-mismatch", f"stored bbox {self.tight_bbox} != alpha support {bbox}"
            )
        object.__setattr__(self, "raster", raster)
        object.__setattr__(self, "tight_bbox", bbox)

    @property
    def key(self) -> tuple[int, str, int]:
        return (self.category_id, self.variant, self.view_index)

    def cropped(self) -> np.ndarray:
        """Raster restricted to the tight bbox."""
        x, y, w, h = self.tight_bbox
        return self.raster[y:y + h, x:x + w]


class SpriteLibrary:
    """Sprites grouped by category; read-only after construction."""

    def __init__(self, categories: Sequence[str], sprites: Iterable[SpriteView]):
        categories = list(categories)
        if not categories:
            raise SynthDetError("invalid-library", "no categories")
        if any(not name or not name.strip() for name in categories):
            raise SynthDetError("invalid-library", "empty category name")
        if len(set(categories)) != len(categories):
            raise SynthDetError("invalid-library", "duplicate category name")
        self.categories = categories
        self.by_category: dict[int, list[SpriteView]] = {i: [] for i in range(len(categories))}
        self._index: dict[tuple[int, str, int], SpriteView] = {}
        for sprite in sprites:
            if sprite.category_id not in self.by_category:
                raise SynthDetError(
                    "invalid-library", f"sprite category {sprite.category_id} not in library"
                )
            if sprite.key in self._index:
                raise SynthDetError("duplicate-view", f"duplicate sprite key {sprite.key}")
            self._index[sprite.key] = sprite
            self.by_category[sprite.category_id].append(sprite)
        for cid, group in self.by_category.items():
            if not group:
                raise SynthDetError("invalid-library", f"category {categories[cid]!r} has no sprites")

    def __len__(self):
        return len(self._index)

    def __iter__(self):
        for cid in range(len(self.categories)):
            yield from self.by_category[cid]

    def get(self, category_id: int, variant: str, view_index: int) -> SpriteView:
        try:
            return self._index[(category_id, variant, view_index)]
        except KeyError:
            raise SynthDetError(
                "unknown-sprite", f"no sprite {(category_id, variant, view_index)}"
            ) from None


def key_background(image, key_color, tolerance: float) -> np.ndarray:
    """Chroma-key ``image`` against ``key_color``.

    Pixels whose largest per-channel absolute difference from the key is at
    most ``tolerance`` become transparent; everything else is opaque. RGB is
    kept. Returns an ``(H, W, 4)`` uint8 raster.
    """
    tolerance = float(tolerance)
    if not np.isfinite(tolerance) or tolerance < 0:
        raise SynthDetError("invalid-argument", "tolerance must be finite and >= 0")
    rgb = np.asarray(image)
    if rgb.ndim != 3 or rgb.shape[2] < 3:
        raise SynthDetError("invalid-argument", "image must be (H, W, 3)")
    rgb = rgb[..., :3].astype(np.uint8)
    diff = np.abs(rgb.astype(np.int16) - np.asarray(key_color, dtype=np.int16)[:3]).max(axis=2)
    alpha = np.where(diff <= tolerance, 0, 255).astype(np.uint8)
    if not alpha.any():
        raise SynthDetError("empty-sprite", "keying removed every pixel")
    return np.dstack([rgb, alpha])


def despeckle(raster: np.ndarray, min_pixels: int) -> np.ndarray:
    """Clear opaque 8-connected components smaller than ``min_pixels``."""
    from scipy import ndimage

    out = raster.copy()
    labels, count = ndimage.label(out[..., 3] > 0, structure=np.ones((3, 3), dtype=bool))
    if count:
        sizes = np.bincount(labels.ravel())
        small = sizes < min_pixels
        small[0] = False
        out[small[labels], 3] = 0
    if not out[..., 3].any():
        raise SynthDetError("empty-sprite", "despeckle removed every pixel")
    return out


def load_rgba(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGBA")).copy()


def save_rgba(raster: np.ndarray, path) -> None:
    Image.fromarray(np.asarray(raster, dtype=np.uint8), mode="RGBA").save(path, format="PNG")


def load_library(manifest_path) -> SpriteLibrary:
    """Read a sprite manifest.

    Grammar: ``category <name>`` opens a category; ``sprite <variant>
    <view_index> <path>`` lines below it add sprites. Paths are relative to
    the manifest. ``#`` lines and blank lines are ignored.
    """
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    categories: list[str] = []
    sprites: list[SpriteView] = []
    seen: set[tuple[int, str, int]] = set()
    with open(manifest_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split(maxsplit=3 if text.startswith("sprite") else 1)
            if parts[0] == "category" and len(parts) == 2:
                categories.append(parts[1])
            elif parts[0] == "sprite" and len(parts) == 4:
                if not categories:
                    raise ParseError(manifest_path, lineno, "sprite before any category")
                variant, view, rel = parts[1], parts[2], parts[3]
                if variant not in VARIANTS:
                    raise ParseError(manifest_path, lineno, f"unknown variant {variant!r}")
                try:
                    view_index = int(view)
                except ValueError:
                    raise ParseError(manifest_path, lineno, f"bad view index {view!r}") from None
                key = (len(categories) - 1, variant, view_index)
                if key in seen:
                    raise SynthDetError(
                        "duplicate-view", f"{manifest_path}:{lineno}: duplicate sprite {key}"
                    )
                seen.add(key)
                path = base / rel
                if not path.is_file():
                    raise SynthDetError("missing-file", f"{manifest_path}:{lineno}: {path}")
                sprites.append(SpriteView(key[0], variant, view_index, load_rgba(path)))
            else:
                raise ParseError(manifest_path, lineno, f"unrecognized line {text!r}")
    return SpriteLibrary(categories, sprites)


def write_manifest(path, categories: Sequence[str], entries) -> None:
    """Write a manifest; ``entries`` yields ``(category_id, variant, view_index, rel_path)``."""
    grouped: dict[int, list] = {i: [] for i in range(len(categories))}
    for cid, variant, view_index, rel in entries:
        grouped[cid].append((variant, view_index, rel))
    lines = []
    for cid, name in enumerate(categories):
        lines.append(f"category {name}")
        lines.extend(f"sprite {v} {k} {rel}" for v, k, rel in grouped[cid])
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
