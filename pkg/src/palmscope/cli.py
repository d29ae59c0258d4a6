"""``palmscope`` command line: ingest, severity, count, eval, compare, augment.

Every subcommand reads a manifest, processes records (optionally on several
threads), and writes reports from the main thread in manifest order, so the
bytes on disk do not depend on ``--jobs``.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import numpy as np
from PIL import Image, ImageDraw

from . import __version__
from .annot import (AnnotationParseError, BoxAnnotation, convert_box_document, parse_via_polygons,
                    parse_yolo_boxes, rasterize_polygon)
from .config import Config, ConfigError, ManifestRecord, load_config, load_manifest
from .counter import count_caterpillars_classical
from .detect import DetectionFormatError, count_caterpillars_detections, nms, parse_detections
from .evaluate import (ConfusionCounts, average_precision, classification_metrics, count_agreement,
                       detection_confusion, mean_average_precision)
from .imgcore import ImageFormatError, load_image, save_png
from .prep import augment_image, resize_image, sample_steps
from .severity import NoLeafError, crop_segment, quantize_colors, compute_progression

log = logging.getLogger("palmscope")

EXIT_OK = 0
EXIT_RECORD_ERRORS = 1
EXIT_USAGE = 2

# Distinct outline colors for numbered components / boxes.
_PALETTE = [
    (230, 25, 75), (60, 180, 75), (0, 130, 200), (245, 130, 48), (145, 30, 180),
    (70, 240, 240), (240, 50, 230), (210, 245, 60), (250, 190, 190), (0, 128, 128),
]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------- emitters

def _dump_json(path: Path, obj: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _dump_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None else v for v in row])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue(), encoding="utf-8")


def _safe_name(image_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", image_id)


def _run_records(fn: Callable[[ManifestRecord], Any], records: Sequence[ManifestRecord], jobs: int) -> list:
    if jobs <= 1:
        return [fn(r) for r in records]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, records))


def _error(record: ManifestRecord, exc: BaseException, **extra) -> dict:
    return {"image_id": record.image_id, "kind": type(exc).__name__, "message": str(exc), **extra}


_RECORD_ERRORS = (AnnotationParseError, DetectionFormatError, ImageFormatError, NoLeafError,
                  OSError, ValueError)


# ---------------------------------------------------------------- inputs

def _image_size(path: Path) -> tuple[int, int]:
    with Image.open(path) as im:
        return im.size


def _via_masks(record: ManifestRecord, width: int, height: int,
               labels: Optional[Sequence[str]]) -> tuple[list[np.ndarray], list[dict], list[str]]:
    parsed = parse_via_polygons(record.annotation_path.read_text(encoding="utf-8"))
    names = {record.image_path.name, record.image_id}
    wanted = {s.lower() for s in labels} if labels else None
    masks, meta = [], []
    for ann in parsed.annotations:
        if ann.image_id not in names:
            continue
        if wanted is not None and ann.class_label.lower() not in wanted:
            continue
        masks.append(rasterize_polygon(ann, width, height))
        meta.append({"label": ann.class_label, "vertices": [list(v) for v in ann.vertices]})
    return masks, meta, parsed.errors


_MASK_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}


def _load_mask_file(path: Path, width: int, height: int) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.array(im.convert("L"))
    if arr.shape != (height, width):
        raise ImageFormatError(f"mask {path.name} is {arr.shape[1]}x{arr.shape[0]}, image is {width}x{height}")
    return (arr > 0).astype(np.uint8)


def _leaf_masks(record: ManifestRecord, img: np.ndarray, cfg: Config) -> tuple[list[np.ndarray], list[str]]:
    h, w = img.shape[:2]
    path = record.annotation_path
    if path is None:
        return [np.ones((h, w), dtype=np.uint8)], []
    if path.suffix.lower() == ".json":
        masks, _, errors = _via_masks(record, w, h, cfg.severity_labels)
        if not masks and not errors:
            raise AnnotationParseError(f"no leaflet polygons for {record.image_path.name}", path.name)
        return masks, errors
    return [_load_mask_file(path, w, h)], []


def _is_box_document(text: str) -> bool:
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        return False
    return isinstance(data, dict) and isinstance(data.get("images"), list)


def _truth_boxes(record: ManifestRecord) -> list[BoxAnnotation]:
    path = record.annotation_path
    if path is None:
        raise ValueError("record has no annotation_path")
    w, h = _image_size(record.image_path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".json":
        converted = convert_box_document(text)
        text = converted.get(record.image_path.name, converted.get(record.image_id, ""))
    return parse_yolo_boxes(text, w, h)


def _detections(record: ManifestRecord):
    if record.detection_path is None:
        raise ValueError("record has no detection_path")
    return parse_detections(record.detection_path.read_text(encoding="utf-8"))


# ---------------------------------------------------------------- overlays

def _component_overlay(img: np.ndarray, labels: np.ndarray, areas: np.ndarray, min_area: int) -> Image.Image:
    canvas = (img.astype(np.float64) * 0.5).astype(np.uint8)
    counted = 0
    positions = []
    for lab in range(1, len(areas) + 1):
        if areas[lab - 1] < min_area:
            continue
        counted += 1
        sel = labels == lab
        canvas[sel] = _PALETTE[(counted - 1) % len(_PALETTE)]
        ys, xs = np.nonzero(sel)
        positions.append((counted, int(xs.mean()), int(ys.mean())))
    out = Image.fromarray(canvas)
    draw = ImageDraw.Draw(out)
    for n, x, y in positions:
        draw.text((x, y), str(n), fill=(255, 255, 255))
    return out


def _box_overlay(img: np.ndarray, dets) -> Image.Image:
    out = Image.fromarray(img)
    draw = ImageDraw.Draw(out)
    for n, d in enumerate(dets, start=1):
        color = _PALETTE[(n - 1) % len(_PALETTE)]
        x0, y0, x1, y1 = d.box
        draw.rectangle([x0, y0, max(x0, x1 - 1), max(y0, y1 - 1)], outline=color)
        draw.text((d.box[0] + 2, d.box[1] + 1), f"{n}:{d.confidence:.2f}", fill=color)
    return out


# ---------------------------------------------------------------- subcommands

def cmd_ingest(records, cfg: Config, out: Path, jobs: int) -> tuple[dict, int]:
    def work(rec: ManifestRecord):
        try:
            w, h = _image_size(rec.image_path)
            entry: dict[str, Any] = {"image_id": rec.image_id, "width": w, "height": h,
                                     "polygons": [], "raster_masks": [], "boxes": [], "parse_errors": []}
            masks: list[np.ndarray] = []
            suffix = rec.annotation_path.suffix.lower() if rec.annotation_path else None
            if suffix in _MASK_SUFFIXES:
                masks = [_load_mask_file(rec.annotation_path, w, h)]
                entry["raster_masks"] = [{"source": rec.annotation_path.name}]
            elif rec.annotation_path is not None:
                text = rec.annotation_path.read_text(encoding="utf-8")
                if suffix == ".json" and _is_box_document(text):
                    lines = convert_box_document(text)
                    box_text = lines.get(rec.image_path.name, lines.get(rec.image_id, ""))
                    boxes = parse_yolo_boxes(box_text, w, h)
                    entry["boxes"] = [{"class_id": b.class_id, "box": list(b.box)} for b in boxes]
                    entry["yolo_lines"] = box_text
                elif suffix == ".json":
                    masks, meta, errs = _via_masks(rec, w, h, None)
                    entry["polygons"] = meta
                    entry["parse_errors"] = errs
                else:
                    boxes = parse_yolo_boxes(text, w, h)
                    entry["boxes"] = [{"class_id": b.class_id, "box": list(b.box)} for b in boxes]
            return entry, masks, None
        except _RECORD_ERRORS as exc:
            return None, [], _error(rec, exc)

    results = _run_records(work, records, jobs)
    images, errors = [], []
    for rec, (entry, masks, err) in zip(records, results):
        if err:
            errors.append(err)
            continue
        for i, (m, poly) in enumerate(zip(masks, entry["polygons"] or entry["raster_masks"])):
            rel = f"masks/{_safe_name(rec.image_id)}_{i}.png"
            save_png(out / rel, m)
            poly["mask"] = rel
            poly["pixels"] = int(m.sum())
        if "yolo_lines" in entry:
            rel = f"labels/{_safe_name(rec.image_id)}.txt"
            (out / rel).parent.mkdir(parents=True, exist_ok=True)
            (out / rel).write_text(entry.pop("yolo_lines"), encoding="utf-8")
            entry["label_file"] = rel
        errors.extend({"image_id": rec.image_id, "kind": "AnnotationParseError", "message": e}
                      for e in entry["parse_errors"])
        images.append(entry)
    report = {"command": "ingest", "images": images, "errors": errors}
    _dump_json(out / "annotations.json", report)
    return report, EXIT_RECORD_ERRORS if errors else EXIT_OK


def cmd_severity(records, cfg: Config, out: Path, jobs: int) -> tuple[dict, int]:
    scheme = cfg.color_scheme

    def work(rec: ManifestRecord):
        try:
            img = load_image(rec.image_path)
            masks, parse_errors = _leaf_masks(rec, img, cfg)
        except _RECORD_ERRORS as exc:
            return [], [], [_error(rec, exc)]
        leaflets, overlays, errors = [], [], []
        errors.extend(_error(rec, AnnotationParseError(e)) for e in parse_errors)
        for i, crop in enumerate(crop_segment(img, masks)):
            try:
                rep = compute_progression(crop, masks[i], scheme, mask_index=i)
                leaflets.append({"image_id": rec.image_id, **rep.to_dict(), "progression": rep.progression})
            except NoLeafError as exc:
                errors.append(_error(rec, exc, mask_index=i))
            if cfg.overlays:
                overlays.append((i, np.hstack([crop, quantize_colors(crop, scheme, masks[i])])))
        return leaflets, overlays, errors

    results = _run_records(work, records, jobs)
    leaflets, errors = [], []
    for rec, (rows, overlays, errs) in zip(records, results):
        leaflets.extend(rows)
        errors.extend(errs)
        for i, ov in overlays:
            save_png(out / "overlays" / f"{_safe_name(rec.image_id)}_{i}.png", ov)
    report = {"command": "severity", "leaflets": leaflets, "errors": errors,
              "color_scheme": {"green_marker": list(scheme.green_marker),
                               "brown_marker": list(scheme.brown_marker),
                               "background_marker": list(scheme.background_marker),
                               "green_range": scheme.green_range.to_dict(),
                               "brown_range": scheme.brown_range.to_dict()}}
    _dump_json(out / "report.json", report)
    _dump_csv(out / "report.csv", ["image_id", "mask_index", "green_perc", "brown_perc", "leaf_pixels"],
              [[r["image_id"], r["mask_index"], r["green_perc"], r["brown_perc"], r["leaf_pixels"]]
               for r in leaflets])
    return report, EXIT_RECORD_ERRORS if errors else EXIT_OK


def _classical_count(rec: ManifestRecord, cfg: Config, want_overlay: bool):
    img = load_image(rec.image_path)
    n, comps = count_caterpillars_classical(img, cfg.count)
    row = {"image_id": rec.image_id, "count": n, "truth_count": rec.truth_count,
           "components": [{"label": i + 1, "area": int(a), "counted": bool(a >= cfg.count.min_area)}
                          for i, a in enumerate(comps.areas)]}
    overlay = _component_overlay(img, comps.labels, comps.areas, cfg.count.min_area) if want_overlay else None
    return row, overlay


def _detection_count(rec: ManifestRecord, cfg: Config, want_overlay: bool):
    dets = _detections(rec)
    n = count_caterpillars_detections(dets, cfg.class_id, cfg.conf_cut, cfg.nms_iou)
    kept = [d for d in nms(dets, cfg.nms_iou) if d.class_id == cfg.class_id and d.confidence >= cfg.conf_cut]
    row = {"image_id": rec.image_id, "count": n, "truth_count": rec.truth_count,
           "boxes": [{"box": list(d.box), "confidence": d.confidence} for d in kept]}
    overlay = _box_overlay(load_image(rec.image_path), kept) if want_overlay else None
    return row, overlay


_COUNTERS = {"classical": _classical_count, "detections": _detection_count}


def cmd_count(records, cfg: Config, out: Path, jobs: int, method: str) -> tuple[dict, int]:
    counter = _COUNTERS[method]

    def work(rec):
        try:
            return counter(rec, cfg, cfg.overlays) + (None,)
        except _RECORD_ERRORS as exc:
            return None, None, _error(rec, exc)

    results = _run_records(work, records, jobs)
    rows, errors = [], []
    for rec, (row, overlay, err) in zip(records, results):
        if err:
            errors.append(err)
            continue
        rows.append(row)
        if overlay is not None:
            path = out / "overlays" / f"{_safe_name(rec.image_id)}.png"
            path.parent.mkdir(parents=True, exist_ok=True)
            overlay.save(path, format="PNG")
    report = {"command": "count", "method": method, "images": rows, "errors": errors}
    _dump_json(out / "report.json", report)
    _dump_csv(out / "counts.csv", ["image_id", "count", "truth_count"],
              [[r["image_id"], r["count"], r["truth_count"]] for r in rows])
    if method == "classical":
        _dump_csv(out / "components.csv", ["image_id", "label", "area", "counted"],
                  [[r["image_id"], c["label"], c["area"], int(c["counted"])] for r in rows for c in r["components"]])
    return report, EXIT_RECORD_ERRORS if errors else EXIT_OK


def _metrics_dict(c: ConfusionCounts) -> dict:
    m = classification_metrics(c)
    return {"tp": c.tp, "fp": c.fp, "tn": c.tn, "fn": c.fn, **m._asdict()}


def cmd_eval(records, cfg: Config, out: Path, jobs: int) -> tuple[dict, int]:
    def work(rec):
        try:
            return rec.image_id, _detections(rec), _truth_boxes(rec), None
        except _RECORD_ERRORS as exc:
            return rec.image_id, None, None, _error(rec, exc)

    results = _run_records(work, records, jobs)
    dets, truth, errors = {}, {}, []
    for image_id, d, t, err in results:
        if err:
            errors.append(err)
        else:
            dets[image_id], truth[image_id] = d, t

    classes = sorted({d.class_id for ds in dets.values() for d in ds} | {t.class_id for ts in truth.values() for t in ts})
    per_class, aps, curves = {}, {}, {}
    for c in classes:
        confusion = ConfusionCounts()
        for image_id in sorted(dets):
            confusion = confusion + detection_confusion(dets[image_id], truth[image_id], c, cfg.iou_cut)
        curve, ap = average_precision(dets, truth, c, cfg.iou_cut)
        aps[c] = ap
        curves[c] = curve
        per_class[str(c)] = {**_metrics_dict(confusion), "ap": ap}

    total = ConfusionCounts()
    for c in classes:
        pc = per_class[str(c)]
        total = total + ConfusionCounts(pc["tp"], pc["fp"], pc["tn"], pc["fn"])
    mean_ap, excluded = (None, [])
    if any(ap is not None for ap in aps.values()):
        mean_ap, excluded = mean_average_precision(aps)

    agreement = None
    counted = [r for r in records if r.truth_count is not None and r.image_id in dets]
    if counted:
        predicted = [count_caterpillars_detections(dets[r.image_id], cfg.class_id, cfg.conf_cut, cfg.nms_iou)
                     for r in counted]
        agr = count_agreement(predicted, [r.truth_count for r in counted])
        agreement = {"rate": agr.rate, "percent": agr.percent, "matches": agr.matches, "total": agr.total}

    report = {"command": "eval", "iou_cut": cfg.iou_cut, "per_class": per_class,
              "overall": _metrics_dict(total), "map": mean_ap, "map_excluded_classes": excluded,
              "count_agreement": agreement, "errors": errors}
    _dump_json(out / "report.json", report)
    _dump_csv(out / "report.csv", ["class_id", "tp", "fp", "tn", "fn", "accuracy", "precision", "recall", "f1", "ap"],
              [[c, *(per_class[str(c)][k] for k in ("tp", "fp", "tn", "fn", "accuracy", "precision", "recall", "f1", "ap"))]
               for c in classes])
    for c, curve in curves.items():
        _dump_csv(out / f"pr_class{c}.csv", ["recall", "precision"], curve.points())
    return report, EXIT_RECORD_ERRORS if errors else EXIT_OK


def cmd_compare(records, cfg: Config, out: Path, jobs: int, method: str) -> tuple[dict, int]:
    methods = ["classical", "detections"] if method == "all" else [method]
    with_truth = [r for r in records if r.truth_count is not None]
    errors = [{"image_id": r.image_id, "kind": "MissingTruth", "message": "record has no truth_count"}
              for r in records if r.truth_count is None]

    def work(rec):
        row = {}
        errs = []
        for m in methods:
            try:
                row[m] = _COUNTERS[m](rec, cfg, False)[0]["count"]
            except _RECORD_ERRORS as exc:
                errs.append(_error(rec, exc, method=m))
        return row, errs

    results = _run_records(work, with_truth, jobs)
    summary, table = {}, []
    for m in methods:
        pairs = [(rec, row[m]) for rec, (row, _) in zip(with_truth, results) if m in row]
        agr = count_agreement([p for _, p in pairs], [rec.truth_count for rec, _ in pairs])
        summary[m] = {"rate": agr.rate, "percent": agr.percent, "matches": agr.matches, "total": agr.total,
                      "deltas": {rec.image_id: d for (rec, _), d in zip(pairs, agr.deltas)}}
    for rec, (row, errs) in zip(with_truth, results):
        errors.extend(errs)
        table.append([rec.image_id, rec.truth_count, *(row.get(m) for m in methods)])
    report = {"command": "compare", "methods": summary, "errors": errors}
    _dump_json(out / "agreement.json", report)
    _dump_csv(out / "agreement.csv", ["image_id", "truth_count", *methods], table)
    return report, EXIT_RECORD_ERRORS if errors else EXIT_OK


def cmd_augment(records, cfg: Config, out: Path, jobs: int) -> tuple[dict, int]:
    aug = cfg.augmentation

    def work(item):
        index, rec = item
        try:
            img = load_image(rec.image_path)
        except _RECORD_ERRORS as exc:
            return [], _error(rec, exc)
        if aug.resize is not None:
            img = resize_image(img, *aug.resize)
        # one stream per (seed, record index): results do not depend on scheduling
        rng = np.random.default_rng([cfg.seed, index])
        variants = []
        if aug.steps is not None:
            variants.append((list(aug.steps), augment_image(img, aug.steps)))
        else:
            for _ in range(aug.count):
                steps = sample_steps(rng, aug.ranges)
                variants.append((steps, augment_image(img, steps)))
        return variants, None

    results = _run_records(work, list(enumerate(records)), jobs)
    entries, errors = [], []
    for rec, (variants, err) in zip(records, results):
        if err:
            errors.append(err)
            continue
        for n, (steps, arr) in enumerate(variants):
            rel = f"images/{_safe_name(rec.image_id)}_aug{n}.png"
            save_png(out / rel, arr)
            entries.append({"image_id": rec.image_id, "variant": n, "path": rel,
                            "steps": [s.to_dict() for s in steps]})
    report = {"command": "augment", "seed": cfg.seed, "variants": entries, "errors": errors}
    _dump_json(out / "augment_manifest.json", report)
    return report, EXIT_RECORD_ERRORS if errors else EXIT_OK


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="palmscope", description="Leaflet severity scoring, caterpillar counting and detection evaluation.")
    parser.add_argument("--version", action="version", version=f"palmscope {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--manifest", required=True, help="JSON manifest of images")
        p.add_argument("--config", help="JSON config (falls back to $PALMSCOPE_CONFIG)")
        p.add_argument("--out", help="output directory (overrides config output_dir)")
        p.add_argument("--seed", type=int, help="random seed (overrides config)")
        p.add_argument("--jobs", type=int, help="worker threads (overrides config)")
        return p

    common(sub.add_parser("ingest", help="parse annotations, rasterize polygon masks"))
    common(sub.add_parser("severity", help="score leaflet necrosis progression"))
    common(sub.add_parser("count", help="count caterpillars")).add_argument(
        "--method", choices=sorted(_COUNTERS), default="classical")
    common(sub.add_parser("eval", help="detection metrics against ground truth"))
    common(sub.add_parser("compare", help="count agreement with truth_count per method")).add_argument(
        "--method", choices=["all", *sorted(_COUNTERS)], default="all")
    common(sub.add_parser("augment", help="seeded augmentation sweep"))
    return parser


def execute_command(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = load_config(args.config)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.jobs is not None:
            if args.jobs < 1:
                raise UsageError("--jobs must be >= 1")
            overrides["jobs"] = args.jobs
        if args.out is not None:
            overrides["output_dir"] = args.out
        cfg = replace(cfg, **overrides)
        records = load_manifest(args.manifest)
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        handler = {
            "ingest": cmd_ingest, "severity": cmd_severity, "eval": cmd_eval, "augment": cmd_augment,
        }.get(args.command)
        if handler is not None:
            _, status = handler(records, cfg, out, cfg.jobs)
        elif args.command == "count":
            _, status = cmd_count(records, cfg, out, cfg.jobs, args.method)
        else:
            _, status = cmd_compare(records, cfg, out, cfg.jobs, args.method)
        return status
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except UsageError as exc:
        _report_fatal("usage", str(exc))
        return EXIT_USAGE
    except ConfigError as exc:
        _report_fatal("schema", str(exc))
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        _report_fatal("io" if isinstance(exc, OSError) else "value", str(exc))
        return EXIT_USAGE


def _report_fatal(kind: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": " ".join(message.split())}, sort_keys=True) + "\n")


def main() -> None:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    sys.exit(execute_command())


if __name__ == "__main__":
    main()
