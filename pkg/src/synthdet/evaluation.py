"""IoU, per-category AP / mAP with greedy matching, and open-set rates."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ParseError, SynthDetError
from .openset import UNKNOWN


@dataclass(frozen=True)
class Detection:
    image_id: str
    category_id: int
    score: float
    bbox: tuple[float, float, float, float]  # x_min, y_min, width, height (px)

    def __post_init__(self):
        if not (self.bbox[2] > 0 and self.bbox[3] > 0):
            raise SynthDetError("invalid-detection", f"non-positive box size {self.bbox}")
        if not (np.isfinite(self.score) and 0.0 <= self.score <= 1.0):
            raise SynthDetError("invalid-detection", f"score {self.score} outside [0, 1]")


@dataclass
class EvalResult:
    ap: dict = field(default_factory=dict)  # category_id -> AP, categories with ground truth only
    mAP: float = 0.0
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def to_json(self) -> dict:
        return {"mAP": self.mAP, "ap": {str(k): v for k, v in sorted(self.ap.items())},
                "tp": self.tp, "fp": self.fp, "fn": self.fn}

    def table(self, names: Sequence[str] | None = None) -> str:
        lines = [f"{'category':<24} {'AP':>8}"]
        for cid, ap in sorted(self.ap.items()):
            label = names[cid] if names and cid < len(names) else str(cid)
            lines.append(f"{label:<24} {ap:>8.4f}")
        lines.append(f"{'mAP':<24} {self.mAP:>8.4f}")
        lines.append(f"TP={self.tp} FP={self.fp} FN={self.fn}")
        return "\n".join(lines)


def iou(a, b) -> float:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (aw * ah + bw * bh - inter)


def average_precision(tp_flags: Sequence[bool], n_gt: int) -> float:
    """All-point interpolated AP from TP flags ordered by descending score."""
    if n_gt == 0:
        raise SynthDetError("invalid-argument", "AP undefined without ground truth")
    flags = np.asarray(tp_flags, dtype=bool)
    if flags.size == 0:
        return 0.0
    tp = np.cumsum(flags)
    fp = np.cumsum(~flags)
    recall = np.concatenate([[0.0], tp / n_gt])
    precision = np.concatenate([[0.0], tp / (tp + fp)])
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    return float(np.sum((recall[1:] - recall[:-1]) * envelope[1:]))


def evaluate(detections: Sequence[Detection], ground_truth: Mapping[str, Sequence[tuple[int, tuple]]],
             iou_threshold: float = 0.5) -> EvalResult:
    """Greedy matching per category in descending-score order, then AP and mAP.

    ``ground_truth`` maps image_id to ``[(category_id, bbox), ...]``. Score
    ties keep input order. Each detection takes the unmatched same-category
    box with the highest IoU (first on ties) if that IoU reaches the threshold.
    """
    for det in detections:
        if det.image_id not in ground_truth:
            raise SynthDetError("unknown-image", f"detection on unknown image {det.image_id!r}")
    gt_count: dict = {}
    for boxes in ground_truth.values():
        for cid, _ in boxes:
            gt_count[cid] = gt_count.get(cid, 0) + 1

    result = EvalResult()
    matched = {img: [False] * len(boxes) for img, boxes in ground_truth.items()}
    by_cat: dict = {}
    for det in detections:
        by_cat.setdefault(det.category_id, []).append(det)
    flags_by_cat: dict = {}
    for cid, dets in by_cat.items():
        order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
        flags = []
        for i in order:
            det = dets[i]
            best, best_iou = -1, -1.0
            for k, (gcid, gbox) in enumerate(ground_truth[det.image_id]):
                if gcid != cid or matched[det.image_id][k]:
                    continue
                v = iou(det.bbox, gbox)
                if v > best_iou:
                    best, best_iou = k, v
            hit = best >= 0 and best_iou >= iou_threshold
            if hit:
                matched[det.image_id][best] = True
            flags.append(hit)
        flags_by_cat[cid] = flags
        result.tp += sum(flags)
        result.fp += len(flags) - sum(flags)
    result.fn = sum(gt_count.values()) - result.tp
    for cid in sorted(gt_count):
        result.ap[cid] = average_precision(flags_by_cat.get(cid, []), gt_count[cid])
    result.mAP = float(np.mean(list(result.ap.values()))) if result.ap else 0.0
    return result


def evaluate_openset(decisions) -> tuple[float, float]:
    """``(known_accept_rate, unknown_detection_rate)`` from (truth, decision) pairs.

    A rate whose population is empty is reported as NaN.
    """
    decisions = list(decisions)
    if not decisions:
        raise SynthDetError("invalid-argument", "no decisions to evaluate")
    known = [d for t, d in decisions if t != UNKNOWN]
    unknown = [d for t, d in decisions if t == UNKNOWN]
    kar = sum(d != UNKNOWN for d in known) / len(known) if known else float("nan")
    udr = sum(d == UNKNOWN for d in unknown) / len(unknown) if unknown else float("nan")
    return kar, udr


def read_detections(path) -> list[Detection]:
    """Parse ``<image_id> <category_id> <score> <x_min> <y_min> <w> <h>`` lines."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if len(parts) != 7:
                raise ParseError(path, lineno, f"expected 7 fields, got {len(parts)}")
            try:
                vals = [float(t) for t in parts[2:]]
                det = Detection(parts[0], int(parts[1]), vals[0], tuple(vals[1:]))
            except (ValueError, SynthDetError) as exc:
                raise ParseError(path, lineno, str(exc)) from None
            out.append(det)
    return out


def parse_label_token(token: str) -> int:
    return UNKNOWN if token == "unknown" else int(token)


def format_label(label: int) -> str:
    return "unknown" if label == UNKNOWN else str(label)


def read_decisions(path) -> list[tuple[int, int]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if len(parts) != 2:
                raise ParseError(path, lineno, "expected '<true> <decided>'")
            try:
                out.append((parse_label_token(parts[0]), parse_label_token(parts[1])))
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
    return out
