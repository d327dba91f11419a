"""Automatic Color Equalization for lighting augmentation of backgrounds.

Per channel, each pixel's response is the sum over a pixel set S of
``r(I(p) - I(j)) / |p - j|`` with ``r(x) = clamp(slope * x / 255, -1, 1)``.
Responses are then stretched so the largest magnitude reaches the end of
the code range, with zero response pinned to code 128.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Literal, Union

import numpy as np

from . import kernels
from .errors import SynthDetError
from .scenes import BackgroundScene

FULL = "full"
MID_LEVEL = 128
_U64 = 1 << 64


@dataclass(frozen=True)
class AceParams:
    slope: float = 5.0
    sample_count: Union[int, Literal["full"]] = 1024
    seed: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.slope) and self.slope >= 1.0):
            raise SynthDetError("invalid-ace-params", "slope must be >= 1")
        if self.sample_count != FULL:
            if not isinstance(self.sample_count, (int, np.integer)) or self.sample_count < 16:
                raise SynthDetError("invalid-ace-params", "sample_count must be >= 16 or 'full'")
        if not 0 <= self.seed < _U64:
            raise SynthDetError("invalid-ace-params", "seed must be a 64-bit unsigned integer")

    @property
    def mid_level(self) -> int:
        return MID_LEVEL


def sample_positions(n_pixels: int, params: AceParams) -> np.ndarray:
    """Flat pixel indices of the shared comparison set, ascending."""
    if params.sample_count == FULL or params.sample_count >= n_pixels:
        return np.arange(n_pixels, dtype=np.int64)
    rng = np.random.default_rng(params.seed)
    return np.sort(rng.choice(n_pixels, size=params.sample_count, replace=False)).astype(np.int64)


def tone_map(response: np.ndarray) -> np.ndarray:
    """Stretch a response field to uint8 codes around ``MID_LEVEL``."""
    rmax = float(np.abs(response).max())
    if rmax == 0.0:
        return np.full(response.shape, MID_LEVEL, dtype=np.uint8)
    t = response / rmax
    span = np.where(t >= 0.0, 255.0 - MID_LEVEL, float(MID_LEVEL))
    codes = np.floor(MID_LEVEL + span * t + 0.5)
    return np.clip(codes, 0, 255).astype(np.uint8)


def ace(image, params: AceParams = AceParams()) -> np.ndarray:
    """Equalize an ``(H, W, C)`` or ``(H, W)`` uint8 image channel by channel."""
    img = np.asarray(image)
    if img.size == 0:
        raise SynthDetError("empty-image", "ACE needs a non-empty image")
    squeeze = img.ndim == 2
    if squeeze:
        img = img[..., None]
    h, w, nch = img.shape
    sample = sample_positions(h * w, params)
    out = np.empty((h, w, nch), dtype=np.uint8)
    for ch in range(nch):
        response = kernels.ace_response(img[..., ch].astype(np.float64), sample, float(params.slope))
        out[..., ch] = tone_map(response)
    return out[..., 0] if squeeze else out


def equalize_backgrounds(backgrounds, variants_per_background: int,
                         params: AceParams = AceParams()) -> list[BackgroundScene]:
    """Each background followed by its ACE variants.

    Variant ``k`` of background ``i`` uses seed ``params.seed + 1000*i + k``
    (mod 2**64) and is named ``<scene_id>_ace<k>``; anchors are shared.
    """
    if variants_per_background < 0:
        raise SynthDetError("invalid-argument", "variants_per_background must be >= 0")
    out = []
    for i, scene in enumerate(backgrounds):
        out.append(scene)
        for k in range(variants_per_background):
            p = replace(params, seed=(params.seed + 1000 * i + k) % _U64)
            out.append(BackgroundScene(f"{scene.scene_id}_ace{k}", ace(scene.raster, p), scene.anchors))
    return out
