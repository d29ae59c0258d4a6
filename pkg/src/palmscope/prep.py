"""Resizing, normalization and deterministic affine augmentation."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Union

import numpy as np

from .imgcore import as_image, round_half_away

# Sample coordinates this close to an integer are snapped so lossless transforms stay exact.
_SNAP_EPS = 1e-9


def _bilinear(img: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    """Sample ``img`` at float source coordinates with edge replication."""
    h, w = img.shape[:2]
    rx, ry = np.rint(sx), np.rint(sy)
    sx = np.where(np.abs(sx - rx) < _SNAP_EPS, rx, sx)
    sy = np.where(np.abs(sy - ry) < _SNAP_EPS, ry, sy)
    sx = np.clip(sx, 0.0, w - 1.0)
    sy = np.clip(sy, 0.0, h - 1.0)
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (sx - x0)[..., None]
    fy = (sy - y0)[..., None]
    src = img.astype(np.float64)
    top = src[y0, x0] * (1 - fx) + src[y0, x1] * fx
    bot = src[y1, x0] * (1 - fx) + src[y1, x1] * fx
    out = top * (1 - fy) + bot * fy
    return np.clip(round_half_away(out), 0, 255).astype(np.uint8)


def resize_image(img, out_w: int, out_h: int) -> np.ndarray:
    """Bilinear resize with pixel-center alignment."""
    img = as_image(img)
    if out_w < 1 or out_h < 1:
        raise ValueError("output size must be at least 1x1")
    h, w = img.shape[:2]
    sx = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    sy = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    gx, gy = np.meshgrid(sx, sy)
    return _bilinear(img, gx, gy)


def normalize_pixels(img) -> np.ndarray:
    return as_image(img).astype(np.float64) / 255.0


@dataclass(frozen=True)
class AugmentStep:
    op: str
    value: float = 0.0

    OPS = ("rotate", "shear_h", "shear_v", "flip_h", "flip_v", "zoom")

    def __post_init__(self):
        if self.op not in self.OPS:
            raise ValueError(f"unknown augmentation op {self.op!r}")
        if self.op == "zoom" and not self.value > 0:
            raise ValueError(f"zoom factor must be > 0, got {self.value}")

    def matrix(self) -> np.ndarray:
        """Forward 2x2 map on centered ``(x, y)`` coordinates (y points down)."""
        v = self.value
        if self.op == "rotate":
            # positive angles turn the picture counter-clockwise on screen
            t = math.radians(v)
            c, s = math.cos(t), math.sin(t)
            return np.array([[c, s], [-s, c]])
        if self.op == "shear_h":
            return np.array([[1.0, v], [0.0, 1.0]])
        if self.op == "shear_v":
            return np.array([[1.0, 0.0], [v, 1.0]])
        if self.op == "flip_h":
            return np.array([[-1.0, 0.0], [0.0, 1.0]])
        if self.op == "flip_v":
            return np.array([[1.0, 0.0], [0.0, -1.0]])
        return np.array([[v, 0.0], [0.0, v]])

    def to_dict(self) -> dict:
        if self.op in ("flip_h", "flip_v"):
            return {"op": self.op}
        return {"op": self.op, "value": self.value}


StepLike = Union[AugmentStep, str, Mapping]
_STEP_RE = re.compile(r"^\s*(\w+)\s*(?:\(\s*([-+0-9.eE]+)\s*\))?\s*$")


def parse_step(step: StepLike) -> AugmentStep:
    """Accept an ``AugmentStep``, a ``{"op": ..., "value": ...}`` mapping, or ``"rotate(30)"``."""
    if isinstance(step, AugmentStep):
        return step
    if isinstance(step, Mapping):
        return AugmentStep(str(step["op"]), float(step.get("value", 0.0)))
    m = _STEP_RE.match(str(step))
    if not m:
        raise ValueError(f"cannot parse augmentation step {step!r}")
    return AugmentStep(m.group(1), float(m.group(2)) if m.group(2) else 0.0)


def augment_image(img, steps: Iterable[StepLike]) -> np.ndarray:
    """Apply a composition of affine steps about the image center.

    Steps compose left to right (the first listed is applied first). Output
    size equals input size; exposed pixels replicate the nearest edge.
    """
    img = as_image(img)
    h, w = img.shape[:2]
    fwd = np.eye(2)
    for step in steps:
        fwd = parse_step(step).matrix() @ fwd
    inv = np.linalg.inv(fwd)
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    gx, gy = np.meshgrid(np.arange(w, dtype=np.float64) - cx, np.arange(h, dtype=np.float64) - cy)
    sx = inv[0, 0] * gx + inv[0, 1] * gy + cx
    sy = inv[1, 0] * gx + inv[1, 1] * gy + cy
    return _bilinear(img, sx, sy)


@dataclass(frozen=True)
class AugmentRanges:
    """Sampling ranges used to draw random augmentation compositions."""

    rotate: tuple[float, float] = (-30.0, 30.0)
    shear: tuple[float, float] = (-0.2, 0.2)
    zoom: tuple[float, float] = (0.8, 1.2)
    flip_prob: float = 0.5

    def __post_init__(self):
        if not (0 < self.zoom[0] <= self.zoom[1]):
            raise ValueError("zoom range must be positive and ordered")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError("flip_prob must lie in [0, 1]")


def sample_steps(rng: np.random.Generator, ranges: AugmentRanges) -> list[AugmentStep]:
    steps = [
        AugmentStep("rotate", float(rng.uniform(*ranges.rotate))),
        AugmentStep("shear_h", float(rng.uniform(*ranges.shear))),
        AugmentStep("shear_v", float(rng.uniform(*ranges.shear))),
        AugmentStep("zoom", float(rng.uniform(*ranges.zoom))),
    ]
    if rng.random() < ranges.flip_prob:
        steps.append(AugmentStep("flip_h"))
    if rng.random() < ranges.flip_prob:
        steps.append(AugmentStep("flip_v"))
    return steps
