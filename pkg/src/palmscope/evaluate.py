"""Classification metrics, precision-recall curves, AP/mAP and count agreement.

Metrics whose denominator is zero come back as ``None`` ("undefined") rather
than 0, so they cannot silently drag an average down.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Optional, Sequence

from .annot import BoxAnnotation
from .detect import DEFAULT_IOU_CUT, Detection, filter_rois


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)


class Metrics(NamedTuple):
    accuracy: Optional[float]
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]


def _ratio(num: float, den: float) -> Optional[float]:
    return num / den if den else None


def f1_score(precision: Optional[float], recall: Optional[float]) -> Optional[float]:
    if precision is None or recall is None or precision + recall == 0:
        return None
    return 2 * precision * recall / (precision + recall)


def classification_metrics(c: ConfusionCounts) -> Metrics:
    precision = _ratio(c.tp, c.tp + c.fp)
    recall = _ratio(c.tp, c.tp + c.fn)
    return Metrics(
        accuracy=_ratio(c.tp + c.tn, c.total),
        precision=precision,
        recall=recall,
        f1=f1_score(precision, recall),
    )


@dataclass
class PrCurve:
    recall: list[float] = field(default_factory=list)
    precision: list[float] = field(default_factory=list)

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.recall, self.precision))


def match_flags(dets: Mapping[str, Sequence[Detection]], truth: Mapping[str, Sequence[BoxAnnotation]],
                class_id: int, iou_cut: float = DEFAULT_IOU_CUT) -> tuple[list[tuple[float, str, int, bool]], int]:
    """Per-image TP/FP marking for one class, pooled in evaluation order.

    Returns ``(rows, n_truth)`` where rows are ``(confidence, image_id, rank, is_tp)``
    sorted by confidence descending, then image id, then rank within the image.
    """
    rows = []
    n_truth = 0
    for image_id in sorted(set(dets) | set(truth)):
        gts = [g for g in truth.get(image_id, ()) if g.class_id == class_id]
        n_truth += len(gts)
        ds = [d for d in dets.get(image_id, ()) if d.class_id == class_id]
        m = filter_rois(ds, gts, iou_cut)
        rows.extend((d.confidence, image_id, rank, flag) for rank, (d, flag) in enumerate(zip(m.ordered, m.flags)))
    rows.sort(key=lambda r: (-r[0], r[1], r[2]))
    return rows, n_truth


def average_precision(dets: Mapping[str, Sequence[Detection]], truth: Mapping[str, Sequence[BoxAnnotation]],
                      class_id: int, iou_cut: float = DEFAULT_IOU_CUT) -> tuple[PrCurve, Optional[float]]:
    """All-point AP: sum of precision times recall increment at every true positive.

    AP is ``None`` when the class has no ground-truth instances.
    """
    rows, n_truth = match_flags(dets, truth, class_id, iou_cut)
    curve = PrCurve()
    tp = fp = 0
    ap = 0.0
    for _, _, _, is_tp in rows:
        if is_tp:
            tp += 1
        else:
            fp += 1
        precision = tp / (tp + fp)
        recall = tp / n_truth if n_truth else 0.0
        curve.recall.append(recall)
        curve.precision.append(precision)
        if is_tp and n_truth:
            ap += precision / n_truth
    return curve, (ap if n_truth else None)


def mean_average_precision(per_class_ap: Mapping[int, Optional[float]] | Sequence[Optional[float]]
                           ) -> tuple[float, list]:
    """Mean over classes with a defined AP. Returns ``(mAP, excluded class keys)``."""
    items = per_class_ap.items() if isinstance(per_class_ap, Mapping) else enumerate(per_class_ap)
    defined, excluded = [], []
    for key, ap in items:
        if ap is None:
            excluded.append(key)
        else:
            defined.append(ap)
    if not defined:
        raise ValueError("no class has a defined AP")
    # fsum is correctly rounded, so class order cannot change the result
    return math.fsum(defined) / len(defined), excluded


@dataclass
class Agreement:
    matches: int
    total: int
    deltas: list[int]

    @property
    def rate(self) -> Optional[float]:
        return self.matches / self.total if self.total else None

    @property
    def percent(self) -> Optional[float]:
        return None if self.rate is None else round(100.0 * self.rate, 6)


def count_agreement(predicted: Sequence[int], truth: Sequence[int]) -> Agreement:
    """Exact-match rate of per-image counts, with ``predicted - truth`` deltas."""
    if len(predicted) != len(truth):
        raise ValueError(f"length mismatch: {len(predicted)} predicted vs {len(truth)} truth")
    deltas = [int(p) - int(t) for p, t in zip(predicted, truth)]
    return Agreement(sum(1 for d in deltas if d == 0), len(deltas), deltas)


def detection_confusion(dets: Sequence[Detection], truth: Sequence[BoxAnnotation], class_id: int,
                        iou_cut: float = DEFAULT_IOU_CUT) -> ConfusionCounts:
    """TP/FP/FN for one class on one image; TN is not defined for boxes and stays 0."""
    ds = [d for d in dets if d.class_id == class_id]
    gts = [g for g in truth if g.class_id == class_id]
    m = filter_rois(ds, gts, iou_cut)
    return ConfusionCounts(tp=len(m.tp), fp=len(m.fp), tn=0, fn=len(m.fn))
