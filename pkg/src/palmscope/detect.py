"""Box geometry post-processing: IoU, per-class NMS, RoI matching, detection counts."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .annot import BoxAnnotation

Box = tuple[float, float, float, float]

DEFAULT_IOU_CUT = 0.5
DEFAULT_CONF_CUT = 0.9


class DetectionFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Detection:
    box: Box
    class_id: int
    confidence: float

    def __post_init__(self):
        x0, y0, x1, y1 = self.box
        if not (x0 < x1 and y0 < y1):
            raise ValueError(f"degenerate box {self.box}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


def box_area(b: Box) -> float:
    return max(0.0, b[2] - b[0]) * max(0.0, b[3] - b[1])


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two ``(x_min, y_min, x_max, y_max)`` boxes."""
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = box_area(a) + box_area(b) - inter
    if union <= 0:
        return 0.0
    return min(1.0, inter / union)


def _by_confidence(dets: Sequence[Detection]) -> list[int]:
    # stable sort: equal confidences keep input order
    return sorted(range(len(dets)), key=lambda i: -dets[i].confidence)


def nms(dets: Sequence[Detection], iou_threshold: float = 0.5) -> list[Detection]:
    """Greedy per-class suppression of boxes overlapping a kept box by more than ``iou_threshold``."""
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError("iou_threshold must lie in [0, 1]")
    order = _by_confidence(dets)
    suppressed = [False] * len(dets)
    keep: list[int] = []
    for pos, i in enumerate(order):
        if suppressed[i]:
            continue
        keep.append(i)
        for j in order[pos + 1:]:
            if not suppressed[j] and dets[j].class_id == dets[i].class_id \
                    and iou(dets[i].box, dets[j].box) > iou_threshold:
                suppressed[j] = True
    return [dets[i] for i in keep]


@dataclass
class RoiMatch:
    tp: list[tuple[Detection, int]] = field(default_factory=list)  # (detection, truth index)
    fp: list[Detection] = field(default_factory=list)
    fn: list[int] = field(default_factory=list)  # unmatched truth indices
    flags: list[bool] = field(default_factory=list)  # TP flag per detection, confidence order
    ordered: list[Detection] = field(default_factory=list)


def filter_rois(dets: Sequence[Detection], truth: Sequence[BoxAnnotation],
                iou_cut: float = DEFAULT_IOU_CUT) -> RoiMatch:
    """Match detections (highest confidence first) to unmatched same-class truths at IoU >= cut."""
    if not 0.0 <= iou_cut <= 1.0:
        raise ValueError("iou_cut must lie in [0, 1]")
    matched = [False] * len(truth)
    out = RoiMatch()
    for i in _by_confidence(dets):
        d = dets[i]
        best, best_iou = -1, -1.0
        for t, gt in enumerate(truth):
            if matched[t] or gt.class_id != d.class_id:
                continue
            v = iou(d.box, gt.box)
            if v > best_iou:
                best, best_iou = t, v
        out.ordered.append(d)
        if best >= 0 and best_iou >= iou_cut:
            matched[best] = True
            out.tp.append((d, best))
            out.flags.append(True)
        else:
            out.fp.append(d)
            out.flags.append(False)
    out.fn = [t for t, m in enumerate(matched) if not m]
    return out


def count_caterpillars_detections(dets: Sequence[Detection], class_id: int = 0,
                                  conf_cut: float = DEFAULT_CONF_CUT,
                                  iou_threshold: float = 0.5) -> int:
    if not 0.0 <= conf_cut <= 1.0:
        raise ValueError("conf_cut must lie in [0, 1]")
    kept = nms(dets, iou_threshold)
    return sum(1 for d in kept if d.class_id == class_id and d.confidence >= conf_cut)


def parse_detections(text: str) -> list[Detection]:
    """Parse ``class confidence x_min y_min x_max y_max`` lines."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 6:
            raise DetectionFormatError(f"line {lineno}: expected 6 fields, got {len(parts)}")
        try:
            cls = int(parts[0])
            conf, x0, y0, x1, y1 = (float(p) for p in parts[1:])
            out.append(Detection((x0, y0, x1, y1), cls, conf))
        except ValueError as exc:
            raise DetectionFormatError(f"line {lineno}: {exc}") from exc
    return out


def _num(v: float) -> str:
    # shortest repr that parses back to the same float; integral values drop ".0"
    v = float(v)
    return str(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(v)


def format_detections(dets: Sequence[Detection]) -> str:
    return "".join(
        " ".join([str(d.class_id), _num(d.confidence)] + [_num(c) for c in d.box]) + "\n"
        for d in dets
    )
