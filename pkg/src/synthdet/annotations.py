"""YOLO label files, class manifests and image lists."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import ParseError, SynthDetError


@dataclass(frozen=True)
class AnnotationRecord:
    category_id: int
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if self.category_id < 0:
            raise SynthDetError("invalid-annotation", "category_id must be >= 0")
        if not (0.0 <= self.cx <= 1.0 and 0.0 <= self.cy <= 1.0):
            raise SynthDetError("invalid-annotation", f"center outside [0, 1]: {self}")
        if not (0.0 < self.w <= 1.0 and 0.0 < self.h <= 1.0):
            raise SynthDetError("invalid-annotation", f"size outside (0, 1]: {self}")
        if min(self.cx + self.w / 2, 1.0) <= max(self.cx - self.w / 2, 0.0) or \
                min(self.cy + self.h / 2, 1.0) <= max(self.cy - self.h / 2, 0.0):
            raise SynthDetError("invalid-annotation", f"box degenerate inside unit square: {self}")

    def to_pixels(self, image_size) -> tuple[float, float, float, float]:
        W, H = image_size
        return ((self.cx - self.w / 2) * W, (self.cy - self.h / 2) * H, self.w * W, self.h * H)


def to_normalized(pixel_bbox, image_size) -> tuple[float, float, float, float]:
    """Pixel ``(x_min, y_min, width, height)`` to normalized ``(cx, cy, w, h)``."""
    x, y, bw, bh = pixel_bbox
    W, H = image_size
    if W < 1 or H < 1:
        raise SynthDetError("invalid-argument", "image size must be >= 1")
    if x < 0 or y < 0 or bw <= 0 or bh <= 0 or x + bw > W or y + bh > H:
        raise SynthDetError("bbox-out-of-bounds", f"{pixel_bbox} not inside {W}x{H}")
    return ((x + bw / 2) / W, (y + bh / 2) / H, bw / W, bh / H)


def format_record(r: AnnotationRecord) -> str:
    return f"{r.category_id} {r.cx:.6f} {r.cy:.6f} {r.w:.6f} {r.h:.6f}\n"


def labels_text(records) -> str:
    return "".join(format_record(r) for r in records)


def write_labels(records, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(labels_text(records))


def parse_labels(text: str, path="<string>") -> list[AnnotationRecord]:
    records = []
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split(" ")
        if len(parts) != 5:
            raise ParseError(path, lineno, f"expected 5 fields, got {line!r}")
        try:
            cid = int(parts[0])
            cx, cy, w, h = (float(t) for t in parts[1:])
        except ValueError as exc:
            raise ParseError(path, lineno, str(exc)) from None
        try:
            records.append(AnnotationRecord(cid, cx, cy, w, h))
        except SynthDetError as exc:
            raise ParseError(path, lineno, exc.message) from None
    return records


def read_labels(path) -> list[AnnotationRecord]:
    return parse_labels(Path(path).read_text(encoding="ascii"), path)


def write_classes(names, path) -> None:
    Path(path).write_text("".join(f"{n}\n" for n in names), encoding="utf-8")


def read_classes(path) -> list[str]:
    return Path(path).read_text(encoding="utf-8").splitlines()


def write_image_list(paths, path) -> None:
    Path(path).write_text("".join(f"{p}\n" for p in paths), encoding="utf-8")


def read_image_list(path) -> list[str]:
    return [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln]
