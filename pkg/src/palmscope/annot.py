"""Annotation ingestion: VIA 2.x polygon exports, normalized box files, polygon masks."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)


class AnnotationParseError(ValueError):
    """Malformed annotation input. ``where`` locates the offending record or line."""

    def __init__(self, message: str, where: str | None = None):
        self.where = where
        super().__init__(f"{where}: {message}" if where else message)


@dataclass(frozen=True)
class PolygonAnnotation:
    image_id: str
    class_label: str
    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        object.__setattr__(self, "vertices", verts)
        if len(verts) < 3:
            raise AnnotationParseError(f"polygon needs >= 3 vertices, got {len(verts)}")
        for x, y in verts:
            if not (math.isfinite(x) and math.isfinite(y)) or x < 0 or y < 0:
                raise AnnotationParseError(f"vertex ({x}, {y}) is not finite and non-negative")


@dataclass(frozen=True)
class BoxAnnotation:
    class_id: int
    box: tuple[float, float, float, float]

    def __post_init__(self):
        if self.class_id < 0:
            raise AnnotationParseError(f"class id must be >= 0, got {self.class_id}")
        x0, y0, x1, y1 = self.box
        if not (x0 < x1 and y0 < y1):
            raise AnnotationParseError(f"degenerate box {self.box}")


@dataclass
class ViaParseResult:
    annotations: list[PolygonAnnotation] = field(default_factory=list)
    skipped_shapes: int = 0
    errors: list[str] = field(default_factory=list)


def _via_records(doc: Any) -> Mapping[str, Any]:
    if not isinstance(doc, Mapping):
        raise AnnotationParseError("VIA export must be a JSON object", "$")
    # Full project saves nest the per-image records.
    if "_via_img_metadata" in doc:
        doc = doc["_via_img_metadata"]
        if not isinstance(doc, Mapping):
            raise AnnotationParseError("must be an object", "$._via_img_metadata")
    return doc


def _region_label(attrs: Any, where: str) -> str:
    if not isinstance(attrs, Mapping):
        raise AnnotationParseError("region_attributes must be an object", where)
    if "label" in attrs:
        return str(attrs["label"])
    if len(attrs) == 1:
        return str(next(iter(attrs.values())))
    raise AnnotationParseError("region has no 'label' attribute", where)


def parse_via_polygons(document: str | bytes | Mapping[str, Any]) -> ViaParseResult:
    """Extract polygon regions from a VIA 2.x export.

    Structural damage (non-object records, missing ``regions``) raises
    :class:`AnnotationParseError` with a JSON-path-like location. A polygon that
    fails validation is recorded in ``errors`` and the remaining records are kept.
    Non-polygon shapes are counted in ``skipped_shapes``.
    """
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise AnnotationParseError(f"invalid JSON ({exc.msg})", f"line {exc.lineno}") from exc
    records = _via_records(document)
    out = ViaParseResult()
    for key, rec in records.items():
        where = f"$[{key!r}]"
        if not isinstance(rec, Mapping):
            raise AnnotationParseError("record must be an object", where)
        if "regions" not in rec:
            raise AnnotationParseError("record has no 'regions'", where)
        image_id = str(rec.get("filename", key))
        regions = rec["regions"]
        if isinstance(regions, Mapping):  # VIA 1.x stored regions keyed by index
            regions = [regions[k] for k in sorted(regions, key=str)]
        if not isinstance(regions, list):
            raise AnnotationParseError("'regions' must be a list", f"{where}.regions")
        for i, region in enumerate(regions):
            rwhere = f"{where}.regions[{i}]"
            if not isinstance(region, Mapping) or not isinstance(region.get("shape_attributes"), Mapping):
                raise AnnotationParseError("region lacks shape_attributes", rwhere)
            shape = region["shape_attributes"]
            if shape.get("name") != "polygon":
                out.skipped_shapes += 1
                continue
            try:
                xs = shape["all_points_x"]
                ys = shape["all_points_y"]
                if len(xs) != len(ys):
                    raise AnnotationParseError("all_points_x/all_points_y lengths differ")
                label = _region_label(region.get("region_attributes", {}), rwhere)
                out.annotations.append(
                    PolygonAnnotation(image_id, label, tuple(zip(map(float, xs), map(float, ys))))
                )
            except (AnnotationParseError, KeyError, TypeError, ValueError) as exc:
                out.errors.append(f"{rwhere}: {exc}")
    if out.skipped_shapes:
        log.warning("skipped %d non-polygon VIA regions", out.skipped_shapes)
    return out


def parse_yolo_boxes(text: str, image_width: int, image_height: int) -> list[BoxAnnotation]:
    """Parse ``class cx cy w h`` lines (normalized) into absolute, clamped corner boxes."""
    boxes = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        where = f"line {lineno}"
        parts = line.split()
        if len(parts) != 5:
            raise AnnotationParseError(f"expected 5 fields, got {len(parts)}", where)
        try:
            cls = int(parts[0])
            cx, cy, w, h = (float(p) for p in parts[1:])
        except ValueError as exc:
            raise AnnotationParseError(f"non-numeric field ({exc})", where) from exc
        if cls < 0:
            raise AnnotationParseError(f"class id must be >= 0, got {cls}", where)
        for name, val in zip(("cx", "cy", "w", "h"), (cx, cy, w, h)):
            if not (math.isfinite(val) and 0.0 <= val <= 1.0):
                raise AnnotationParseError(f"{name}={val} outside [0, 1]", where)
        x0 = min(max((cx - w / 2) * image_width, 0.0), float(image_width))
        x1 = min(max((cx + w / 2) * image_width, 0.0), float(image_width))
        y0 = min(max((cy - h / 2) * image_height, 0.0), float(image_height))
        y1 = min(max((cy + h / 2) * image_height, 0.0), float(image_height))
        try:
            boxes.append(BoxAnnotation(cls, (x0, y0, x1, y1)))
        except AnnotationParseError as exc:
            raise AnnotationParseError(str(exc), where) from exc
    return boxes


def box_to_yolo_line(box: BoxAnnotation, image_width: int, image_height: int) -> str:
    x0, y0, x1, y1 = box.box
    cx = (x0 + x1) / 2 / image_width
    cy = (y0 + y1) / 2 / image_height
    w = (x1 - x0) / image_width
    h = (y1 - y0) / image_height
    return f"{box.class_id} {cx:.10g} {cy:.10g} {w:.10g} {h:.10g}"


def convert_box_document(document: str | bytes | Mapping[str, Any]) -> dict[str, str]:
    """Convert a single-document box export into per-image normalized line text.

    Accepted layout (our own subset)::

        {"images": [{"filename": "a.jpg", "width": 300, "height": 300,
                     "boxes": [{"class_id": 0, "x_min": 1, "y_min": 2,
                                "x_max": 30, "y_max": 40}, ...]}, ...]}
    """
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise AnnotationParseError(f"invalid JSON ({exc.msg})", f"line {exc.lineno}") from exc
    if not isinstance(document, Mapping) or not isinstance(document.get("images"), list):
        raise AnnotationParseError("expected an object with an 'images' list", "$")
    out: dict[str, str] = {}
    for i, img in enumerate(document["images"]):
        where = f"$.images[{i}]"
        try:
            name = str(img["filename"])
            width, height = int(img["width"]), int(img["height"])
            lines = []
            for j, b in enumerate(img.get("boxes", [])):
                box = BoxAnnotation(
                    int(b["class_id"]),
                    (float(b["x_min"]), float(b["y_min"]), float(b["x_max"]), float(b["y_max"])),
                )
                lines.append(box_to_yolo_line(box, width, height))
        except (KeyError, TypeError, ValueError) as exc:
            raise AnnotationParseError(str(exc), where) from exc
        out[name] = "\n".join(lines) + ("\n" if lines else "")
    return out


def rasterize_polygon(poly: PolygonAnnotation | Sequence[Sequence[float]], width: int, height: int) -> np.ndarray:
    """Even-odd fill sampled at pixel centers ``(x + 0.5, y + 0.5)``.

    Vertices may lie outside the canvas; the result is clipped to ``height x width``.
    """
    verts = poly.vertices if isinstance(poly, PolygonAnnotation) else tuple(poly)
    if len(verts) < 3:
        raise AnnotationParseError(f"polygon needs >= 3 vertices, got {len(verts)}")
    if width < 1 or height < 1:
        raise ValueError("canvas must be at least 1x1")
    pts = np.asarray(verts, dtype=np.float64)
    xi, yi = pts[:, 0], pts[:, 1]
    xj, yj = np.roll(xi, 1), np.roll(yi, 1)

    mask = np.zeros((height, width), dtype=np.uint8)
    centers_x = np.arange(width) + 0.5
    y_lo = max(int(np.floor(yi.min())) - 1, 0)
    y_hi = min(int(np.ceil(yi.max())) + 1, height)
    for row in range(y_lo, y_hi):
        py = row + 0.5
        crosses = (yi > py) != (yj > py)
        if not crosses.any():
            continue
        a_x, a_y, b_x, b_y = xi[crosses], yi[crosses], xj[crosses], yj[crosses]
        x_int = (b_x - a_x) * (py - a_y) / (b_y - a_y) + a_x
        x_int.sort()
        # crossings strictly to the right of each center
        right = len(x_int) - np.searchsorted(x_int, centers_x, side="right")
        mask[row] = (right % 2).astype(np.uint8)
    return mask
