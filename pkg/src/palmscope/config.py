"""JSON config and manifest loading for the command-line tool.

Config layout (every key optional)::

    {
      "schema_version": 1,
      "color_scheme": {
        "green_marker": [20, 255, 10], "brown_marker": [139, 69, 19],
        "background_marker": [255, 255, 255],
        "green_range": {"h": [60, 170], "s": [0.15, 1], "v": [0.15, 1]},
        "brown_range": {"h": [5, 45], "s": [0.2, 1], "v": [0.1, 0.85]}
      },
      "severity_labels": null,
      "count": {"blur_kernel": 5, "blur_sigma": 1.0, "threshold": "otsu",
                "erode_kernel": "cross3", "erode_iterations": 1,
                "connectivity": 8, "min_area": 30},
      "iou_cut": 0.5, "conf_cut": 0.9, "nms_iou": 0.5, "class_id": 0,
      "augmentation": {"count": 4, "rotate": [-30, 30], "shear": [-0.2, 0.2],
                       "zoom": [0.8, 1.2], "flip_prob": 0.5, "steps": null,
                       "resize": null},
      "output_dir": "palmscope-out", "jobs": 1, "seed": 0, "overlays": true
    }

Manifest layout::

    {"schema_version": 1,
     "records": [{"image_id": "a", "image_path": "a.png",
                  "annotation_path": "a.json", "detection_path": "a.txt",
                  "truth_count": 3}, ...]}

Relative paths in a manifest resolve against the manifest's directory.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Optional

from .counter import CountParams
from .imgcore import HsvRange
from .prep import AugmentRanges, AugmentStep, parse_step
from .severity import ColorScheme

SCHEMA_VERSION = 1
CONFIG_ENV = "PALMSCOPE_CONFIG"


class ConfigError(ValueError):
    """Schema violation in a config or manifest file; message starts with the offending key."""


@dataclass(frozen=True)
class AugmentConfig:
    count: int = 4
    ranges: AugmentRanges = field(default_factory=AugmentRanges)
    steps: Optional[tuple[AugmentStep, ...]] = None
    resize: Optional[tuple[int, int]] = None


@dataclass(frozen=True)
class Config:
    color_scheme: ColorScheme = field(default_factory=ColorScheme)
    severity_labels: Optional[tuple[str, ...]] = None
    count: CountParams = field(default_factory=CountParams)
    iou_cut: float = 0.5
    conf_cut: float = 0.9
    nms_iou: float = 0.5
    class_id: int = 0
    augmentation: AugmentConfig = field(default_factory=AugmentConfig)
    output_dir: str = "palmscope-out"
    jobs: int = 1
    seed: int = 0
    overlays: bool = True


def _pair(value: Any, key: str) -> tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"{key}: expected a [low, high] pair")
    return float(value[0]), float(value[1])


def _fraction(value: Any, key: str) -> float:
    v = float(value)
    if not 0.0 <= v <= 1.0:
        raise ConfigError(f"{key}: {v} outside [0, 1]")
    return v


def _hsv_range(d: Any, key: str) -> HsvRange:
    if not isinstance(d, Mapping):
        raise ConfigError(f"{key}: expected an object with h, s, v pairs")
    try:
        return HsvRange.from_bounds(_pair(d["h"], f"{key}.h"), _pair(d["s"], f"{key}.s"), _pair(d["v"], f"{key}.v"))
    except KeyError as exc:
        raise ConfigError(f"{key}: missing {exc.args[0]!r}") from None
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def _color_scheme(d: Mapping[str, Any]) -> ColorScheme:
    base = ColorScheme()
    kwargs: dict[str, Any] = {}
    for name in ("green_marker", "brown_marker", "background_marker"):
        if name in d:
            kwargs[name] = tuple(int(c) for c in d[name])
    for name in ("green_range", "brown_range"):
        if name in d:
            kwargs[name] = _hsv_range(d[name], f"color_scheme.{name}")
    unknown = set(d) - {"green_marker", "brown_marker", "background_marker", "green_range", "brown_range"}
    if unknown:
        raise ConfigError(f"color_scheme: unknown keys {sorted(unknown)}")
    try:
        return replace(base, **kwargs)
    except ValueError as exc:
        raise ConfigError(f"color_scheme: {exc}") from None


def _augmentation(d: Mapping[str, Any]) -> AugmentConfig:
    try:
        ranges = AugmentRanges(
            rotate=_pair(d.get("rotate", (-30.0, 30.0)), "augmentation.rotate"),
            shear=_pair(d.get("shear", (-0.2, 0.2)), "augmentation.shear"),
            zoom=_pair(d.get("zoom", (0.8, 1.2)), "augmentation.zoom"),
            flip_prob=float(d.get("flip_prob", 0.5)),
        )
        steps = d.get("steps")
        if steps is not None:
            steps = tuple(parse_step(s) for s in steps)
        resize = d.get("resize")
        if resize is not None:
            resize = (int(resize[0]), int(resize[1]))
            if min(resize) < 1:
                raise ValueError("resize dimensions must be >= 1")
        count = int(d.get("count", 4))
        if count < 1:
            raise ValueError("count must be >= 1")
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"augmentation: {exc}") from None
    return AugmentConfig(count=count, ranges=ranges, steps=steps, resize=resize)


_TOP_KEYS = {
    "schema_version", "color_scheme", "severity_labels", "count", "iou_cut", "conf_cut",
    "nms_iou", "class_id", "augmentation", "output_dir", "jobs", "seed", "overlays",
}


def config_from_dict(d: Mapping[str, Any]) -> Config:
    if not isinstance(d, Mapping):
        raise ConfigError("config: top level must be an object")
    version = d.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: unsupported value {version!r}")
    unknown = set(d) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"config: unknown keys {sorted(unknown)}")
    kwargs: dict[str, Any] = {}
    if "color_scheme" in d:
        kwargs["color_scheme"] = _color_scheme(d["color_scheme"])
    if d.get("severity_labels") is not None:
        kwargs["severity_labels"] = tuple(str(x) for x in d["severity_labels"])
    if "count" in d:
        try:
            kwargs["count"] = CountParams(**d["count"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"count: {exc}") from None
    for key in ("iou_cut", "conf_cut", "nms_iou"):
        if key in d:
            kwargs[key] = _fraction(d[key], key)
    for key in ("class_id", "seed", "jobs"):
        if key in d:
            if not isinstance(d[key], int) or d[key] < (1 if key == "jobs" else 0):
                raise ConfigError(f"{key}: invalid value {d[key]!r}")
            kwargs[key] = d[key]
    if "augmentation" in d:
        kwargs["augmentation"] = _augmentation(d["augmentation"])
    if "output_dir" in d:
        kwargs["output_dir"] = str(d["output_dir"])
    if "overlays" in d:
        kwargs["overlays"] = bool(d["overlays"])
    return Config(**kwargs)


def load_config(path: str | os.PathLike | None) -> Config:
    """Load ``path``, else ``$PALMSCOPE_CONFIG``, else built-in defaults."""
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return Config()
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return config_from_dict(data)


@dataclass(frozen=True)
class ManifestRecord:
    image_id: str
    image_path: Path
    annotation_path: Optional[Path] = None
    detection_path: Optional[Path] = None
    truth_count: Optional[int] = None


def load_manifest(path: str | os.PathLike) -> list[ManifestRecord]:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"manifest: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, Mapping) or not isinstance(data.get("records"), list):
        raise ConfigError("manifest: expected an object with a 'records' list")
    if data.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigError(f"manifest.schema_version: unsupported value {data.get('schema_version')!r}")
    base = path.parent
    seen: set[str] = set()
    records = []
    for i, rec in enumerate(data["records"]):
        where = f"records[{i}]"
        if not isinstance(rec, Mapping):
            raise ConfigError(f"{where}: must be an object")
        try:
            image_id = str(rec["image_id"])
            image_path = base / rec["image_path"]
        except KeyError as exc:
            raise ConfigError(f"{where}: missing {exc.args[0]!r}") from None
        if image_id in seen:
            raise ConfigError(f"{where}.image_id: duplicate {image_id!r}")
        seen.add(image_id)
        resolved = {}
        for key in ("annotation_path", "detection_path"):
            resolved[key] = base / rec[key] if rec.get(key) is not None else None
        for key, p in (("image_path", image_path), *resolved.items()):
            if p is not None and not p.exists():
                raise ConfigError(f"{where}.{key}: file not found: {p}")
        truth = rec.get("truth_count")
        if truth is not None and (not isinstance(truth, int) or truth < 0):
            raise ConfigError(f"{where}.truth_count: must be a non-negative integer")
        records.append(ManifestRecord(image_id, image_path, truth_count=truth, **resolved))
    return records
