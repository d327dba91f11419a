"""Multi-view sprite rendering of scanned triangle meshes.

Orthographic, unlit, depth-buffered software rasterization. World
convention: +y is the vertical (turntable) axis, the camera looks down -z,
image rows grow downward.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ParseError, SynthDetError
from .sprites import SpriteView, save_rgba


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray  # (N, 3) float64, millimeters
    faces: np.ndarray  # (F, 3) int64, 0-based
    vertex_colors: np.ndarray  # (N, 3) float64 in [0, 1]

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        c = np.asarray(self.vertex_colors, dtype=np.float64).reshape(-1, 3)
        if not np.isfinite(v).all():
            raise SynthDetError("invalid-mesh", "non-finite vertex coordinate")
        if len(c) != len(v):
            raise SynthDetError("invalid-mesh", "vertex_colors length != vertex count")
        if not np.isfinite(c).all() or (c < 0).any() or (c > 1).any():
            raise SynthDetError("invalid-mesh", "vertex colors must lie in [0, 1]")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise SynthDetError("invalid-mesh", "face index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        object.__setattr__(self, "vertex_colors", c)


@dataclass(frozen=True)
class ViewSpec:
    azimuth: float = 0.0
    elevation: float = 0.0
    image_size: tuple[int, int] = (128, 128)  # (width, height)
    fit_margin: float = 0.05
    supersample: bool = False  # 2x2 samples per pixel, fractional alpha

    def __post_init__(self):
        w, h = self.image_size
        if w < 8 or h < 8:
            raise SynthDetError("invalid-view", "image dimensions must be >= 8 px")
        if not 0.0 < self.fit_margin < 0.5:
            raise SynthDetError("invalid-view", "fit_margin must be in (0, 0.5)")
        if not 0.0 <= self.azimuth < 360.0:
            raise SynthDetError("invalid-view", "azimuth must be in [0, 360)")
        if not -90.0 <= self.elevation <= 90.0:
            raise SynthDetError("invalid-view", "elevation must be in [-90, 90]")


def load_mesh(path) -> TriangleMesh:
    """Parse the ASCII mesh format (``v x y z r g b`` / ``f i j k``, 1-based)."""
    verts, cols, faces = [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            try:
                if parts[0] == "v" and len(parts) == 7:
                    vals = [float(t) for t in parts[1:]]
                    verts.append(vals[:3])
                    cols.append(vals[3:])
                    continue
                if parts[0] == "f" and len(parts) == 4:
                    idx = [int(t) for t in parts[1:]]
                    if min(idx) < 1:
                        raise ValueError("face indices are 1-based")
                    faces.append([i - 1 for i in idx])
                    continue
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
            raise ParseError(path, lineno, f"unrecognized line {line.strip()!r}")
    try:
        return TriangleMesh(np.array(verts), np.array(faces), np.array(cols))
    except SynthDetError as exc:
        raise SynthDetError(exc.code, f"{path}: {exc.message}") from None


def save_mesh(mesh: TriangleMesh, path) -> None:
    lines = [
        "v " + " ".join(repr(float(x)) for x in (*p, *c))
        for p, c in zip(mesh.vertices, mesh.vertex_colors)
    ]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _rotation_cs(degrees: float) -> tuple[float, float]:
    if degrees % 360.0 == 0.0:
        return 1.0, 0.0
    rad = math.radians(degrees)
    return math.cos(rad), math.sin(rad)


def rotate_about_vertical(mesh: TriangleMesh, degrees: float) -> TriangleMesh:
    """Rotate the mesh about the vertical (y) axis; +x turns toward -z."""
    if degrees % 360.0 == 0.0:
        return mesh
    c, s = _rotation_cs(degrees)
    v = mesh.vertices
    out = np.empty_like(v)
    out[:, 0] = v[:, 0] * c + v[:, 2] * s
    out[:, 1] = v[:, 1]
    out[:, 2] = v[:, 2] * c - v[:, 0] * s
    return TriangleMesh(out, mesh.faces, mesh.vertex_colors)


def _tilt(vertices: np.ndarray, elevation: float) -> np.ndarray:
    """Rotate about the horizontal x axis so positive elevation looks down on the top."""
    if elevation == 0.0:
        return vertices
    c, s = _rotation_cs(elevation)
    out = np.empty_like(vertices)
    out[:, 0] = vertices[:, 0]
    out[:, 1] = vertices[:, 1] * c - vertices[:, 2] * s
    out[:, 2] = vertices[:, 1] * s + vertices[:, 2] * c
    return out


def _render_oriented(mesh, view, category_id, variant, view_index) -> SpriteView:
    """Render a mesh already rotated into azimuth; applies elevation only."""
    if len(mesh.faces) == 0 or len(mesh.vertices) == 0:
        raise SynthDetError("empty-mesh", "mesh has no faces")
    used = np.unique(mesh.faces)
    v = _tilt(mesh.vertices[used], view.elevation)
    remap = np.full(len(mesh.vertices), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    faces = remap[mesh.faces]
    colors = np.floor(mesh.vertex_colors[used] * 255.0 + 0.5)

    width, height = view.image_size
    lo, hi = v[:, :2].min(axis=0), v[:, :2].max(axis=0)
    ext = hi - lo
    if ext[0] <= 0.0 and ext[1] <= 0.0:
        raise SynthDetError("degenerate-projection", "projected extent has zero area")
    avail_w = width * (1.0 - 2.0 * view.fit_margin)
    avail_h = height * (1.0 - 2.0 * view.fit_margin)
    scale = min(avail_w / ext[0] if ext[0] > 0 else math.inf,
                avail_h / ext[1] if ext[1] > 0 else math.inf)
    mid = (lo + hi) / 2.0
    ss = 2 if view.supersample else 1
    sx = ((v[:, 0] - mid[0]) * scale + width / 2.0) * ss
    sy = ((mid[1] - v[:, 1]) * scale + height / 2.0) * ss
    sz = v[:, 2]
    _, rgb, covered = kernels.rasterize(sx, sy, sz, colors, faces, width * ss, height * ss)

    if ss == 1:
        alpha = covered * np.uint8(255)
        color = np.floor(rgb + 0.5)
    else:
        cov = covered.reshape(height, ss, width, ss).astype(np.float64)
        count = cov.sum(axis=(1, 3))
        alpha = np.floor(count / (ss * ss) * 255.0 + 0.5).astype(np.uint8)
        summed = (rgb.reshape(height, ss, width, ss, 3) * cov[..., None]).sum(axis=(1, 3))
        with np.errstate(invalid="ignore", divide="ignore"):
            color = np.where(count[..., None] > 0, np.floor(summed / count[..., None] + 0.5), 0.0)
    raster = np.zeros((height, width, 4), dtype=np.uint8)
    raster[..., :3] = np.clip(color, 0, 255).astype(np.uint8) * (alpha[..., None] > 0)
    raster[..., 3] = alpha
    if not alpha.any():
        raise SynthDetError("degenerate-projection", "no pixel center covered by any triangle")
    return SpriteView(category_id, variant, view_index, raster)


def render_view(mesh: TriangleMesh, view: ViewSpec, category_id: int = 0,
                variant: str = "upright", view_index: int = 0) -> SpriteView:
    """Render one orthographic RGBA view, auto-fitted to the image minus margins."""
    return _render_oriented(rotate_about_vertical(mesh, view.azimuth), view,
                            category_id, variant, view_index)


def render_view_grid(mesh_upright: TriangleMesh, mesh_flipped: TriangleMesh | None,
                     azimuth_count: int, elevations, view: ViewSpec,
                     category_id: int = 0) -> list[SpriteView]:
    """Render every (variant, elevation, azimuth) view, variant-major.

    Azimuth slot ``k`` is reached by applying the ``360 / azimuth_count``
    step rotation ``k`` times, so rendering a pre-rotated mesh shifts the
    slots exactly. ``view_index = e_index * azimuth_count + a_index``.
    """
    if azimuth_count < 1:
        raise SynthDetError("invalid-argument", "azimuth_count must be >= 1")
    elevations = list(elevations)
    if not elevations:
        raise SynthDetError("invalid-argument", "elevations must be non-empty")
    if any(not 0.0 <= e <= 90.0 for e in elevations):
        raise SynthDetError("invalid-argument", "grid elevations must lie in [0, 90]")
    step = 360.0 / azimuth_count
    variants = [("upright", mesh_upright)]
    if mesh_flipped is not None:
        variants.append(("flipped", mesh_flipped))
    out = []
    for variant, mesh in variants:
        for e_idx, elevation in enumerate(elevations):
            oriented = mesh
            slot_view = ViewSpec(0.0, float(elevation), view.image_size,
                                 view.fit_margin, view.supersample)
            for a_idx in range(azimuth_count):
                if a_idx:
                    oriented = rotate_about_vertical(oriented, step)
                try:
                    out.append(_render_oriented(oriented, slot_view, category_id, variant,
                                                e_idx * azimuth_count + a_idx))
                except SynthDetError as exc:
                    raise SynthDetError(
                        exc.code,
                        f"{variant} elevation[{e_idx}]={elevation} azimuth[{a_idx}]: {exc.message}",
                    ) from None
    return out


def sprite_filename(category: str, variant: str, e_index: int, a_index: int) -> str:
    return f"{category}_{variant}_{e_index}_{a_index}.png"


def write_sprites(sprites, category: str, azimuth_count: int, out_dir) -> list[tuple[SpriteView, str]]:
    """Save grid sprites as PNGs; returns ``(sprite, filename)`` pairs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for sprite in sprites:
        e_idx, a_idx = divmod(sprite.view_index, azimuth_count)
        name = sprite_filename(category, sprite.variant, e_idx, a_idx)
        save_rgba(sprite.raster, out_dir / name)
        written.append((sprite, name))
    return written


def box_mesh(size=(1.0, 1.0, 1.0), color=(0.5, 0.5, 0.5), center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Axis-aligned box of 12 triangles with a uniform color."""
    sx, sy, sz = (s / 2.0 for s in size)
    cx, cy, cz = center
    corners = np.array([[cx + dx * sx, cy + dy * sy, cz + dz * sz]
                        for dx in (-1, 1) for dy in (-1, 1) for dz in (-1, 1)])
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    faces = []
    for a, b, c, d in quads:
        faces += [(a, b, c), (a, c, d)]
    return TriangleMesh(corners, np.array(faces), np.tile(np.asarray(color, float), (8, 1)))
