"""Raster carriers, color conversions and range masking.

Images are plain numpy arrays:

* ``ImageBuffer``  -> ``(H, W, 3)`` uint8, channels in R, G, B order
* ``GrayImage``    -> ``(H, W)`` uint8
* ``BinaryMask``   -> ``(H, W)`` uint8 holding only 0 and 1
* HSV rasters      -> ``(H, W, 3)`` float64 with hue in degrees [0, 360),
  saturation and value as fractions in [0, 1]
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from PIL import Image

PathLike = Union[str, Path]

# BT.601 luma weights, in thousandths so the weighted sum stays integral.
_LUMA_WEIGHTS = (299, 587, 114)


class ImageFormatError(ValueError):
    """Raised for rasters that are not 8-bit, 3-channel (or are otherwise malformed)."""


def round_half_away(x):
    """Round half away from zero; works on scalars and arrays."""
    r = np.sign(x) * np.floor(np.abs(x) + 0.5)
    if np.ndim(r) == 0:
        return int(r)
    return r


def as_image(img) -> np.ndarray:
    """Validate and return an ``(H, W, 3)`` uint8 image."""
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ImageFormatError(f"expected (H, W, 3) image, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ImageFormatError("image must be at least 1x1")
    if arr.dtype != np.uint8:
        if np.issubdtype(arr.dtype, np.integer) and arr.size and (arr.min() < 0 or arr.max() > 255):
            raise ImageFormatError("channel values must lie in [0, 255]")
        if not np.issubdtype(arr.dtype, np.integer):
            raise ImageFormatError(f"image dtype must be integral, got {arr.dtype}")
        arr = arr.astype(np.uint8)
    return arr


def as_gray(img) -> np.ndarray:
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise ImageFormatError(f"expected (H, W) gray image, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise ImageFormatError("gray values must lie in [0, 255]")
        arr = arr.astype(np.uint8)
    return arr


def as_mask(mask) -> np.ndarray:
    """Validate and return an ``(H, W)`` uint8 mask of zeros and ones."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ImageFormatError(f"expected (H, W) mask, got shape {arr.shape}")
    if arr.dtype == bool:
        return arr.astype(np.uint8)
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ImageFormatError("mask values must be 0 or 1")
    return arr.astype(np.uint8, copy=False)


@dataclass(frozen=True)
class HsvPixel:
    h: float
    s: float
    v: float

    def __post_init__(self):
        if not 0.0 <= self.h < 360.0:
            raise ValueError(f"hue {self.h} outside [0, 360)")
        if not (0.0 <= self.s <= 1.0 and 0.0 <= self.v <= 1.0):
            raise ValueError(f"saturation/value outside [0, 1]: {self.s}, {self.v}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.h, self.s, self.v)


@dataclass(frozen=True)
class HsvRange:
    """Inclusive HSV box. With ``wrap`` set, hue runs ``low.h -> 360 -> up.h``."""

    low: HsvPixel
    up: HsvPixel
    wrap: bool = False

    def __post_init__(self):
        if self.low.s > self.up.s or self.low.v > self.up.v:
            raise ValueError("HsvRange requires low.s <= up.s and low.v <= up.v")
        if not self.wrap and self.low.h > self.up.h:
            raise ValueError("low.h > up.h needs wrap=True")

    @classmethod
    def from_bounds(cls, h: Sequence[float], s: Sequence[float], v: Sequence[float]) -> "HsvRange":
        """Build from ``(lo, hi)`` pairs; a hue pair with ``lo > hi`` wraps."""
        return cls(HsvPixel(h[0], s[0], v[0]), HsvPixel(h[1], s[1], v[1]), wrap=h[0] > h[1])

    def to_dict(self) -> dict:
        return {
            "h": [self.low.h, self.up.h],
            "s": [self.low.s, self.up.s],
            "v": [self.low.v, self.up.v],
        }


def rgb_to_gray(img) -> np.ndarray:
    """Luminance ``round(0.299 R + 0.587 G + 0.114 B)``, computed exactly in integers."""
    arr = as_image(img).astype(np.int64)
    wr, wg, wb = _LUMA_WEIGHTS
    s = wr * arr[..., 0] + wg * arr[..., 1] + wb * arr[..., 2]
    # s / 1000 rounded half up; s >= 0 so this is half-away-from-zero.
    gray = (2 * s + 1000) // 2000
    return np.clip(gray, 0, 255).astype(np.uint8)


def rgb_to_hsv_image(img) -> np.ndarray:
    arr = as_image(img).astype(np.float64)
    r, g, b = arr[..., 0], arr[..., 1], arr[..., 2]
    mx = arr.max(axis=-1)
    mn = arr.min(axis=-1)
    delta = mx - mn

    hue = np.zeros_like(mx)
    chroma = delta > 0
    safe = np.where(chroma, delta, 1.0)
    red_max = chroma & (mx == r)
    green_max = chroma & (mx == g) & ~red_max
    blue_max = chroma & ~red_max & ~green_max
    hue[red_max] = np.mod((g - b)[red_max] / safe[red_max], 6.0)
    hue[green_max] = (b - r)[green_max] / safe[green_max] + 2.0
    hue[blue_max] = (r - g)[blue_max] / safe[blue_max] + 4.0
    hue *= 60.0
    hue[hue >= 360.0] -= 360.0

    sat = np.where(mx > 0, delta / np.where(mx > 0, mx, 1.0), 0.0)
    val = mx / 255.0
    return np.stack([hue, sat, val], axis=-1)


def rgb_to_hsv(pixel: Sequence[int]) -> HsvPixel:
    """Hexcone conversion of a single ``(r, g, b)`` triple."""
    h, s, v = rgb_to_hsv_image(np.asarray(pixel, dtype=np.int64).reshape(1, 1, 3))[0, 0]
    return HsvPixel(float(h), float(s), float(v))


def in_range(hsv, rng: HsvRange) -> np.ndarray:
    """1 where every HSV component lies inside ``rng`` (inclusive), else 0."""
    hsv = np.asarray(hsv, dtype=np.float64)
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    lo, up = rng.low, rng.up
    if rng.wrap:
        hue_ok = (h >= lo.h) | (h <= up.h)
    else:
        hue_ok = (h >= lo.h) & (h <= up.h)
    ok = hue_ok & (s >= lo.s) & (s <= up.s) & (v >= lo.v) & (v <= up.v)
    return ok.astype(np.uint8)


def load_image(path: PathLike) -> np.ndarray:
    """Read a PNG/JPEG as an RGB uint8 array. Alpha is dropped; 16-bit input is rejected."""
    with Image.open(path) as im:
        if im.mode in ("I", "I;16", "I;16B", "I;16L", "I;16N", "F") or "16" in im.mode:
            raise ImageFormatError(f"{path}: 16-bit/float rasters are not supported (mode {im.mode})")
        if im.mode != "RGB":
            im = im.convert("RGB")
        return np.array(im, dtype=np.uint8)


def save_png(path: PathLike, img) -> None:
    """Write an image, gray image, or 0/1 mask (scaled to 0/255) as PNG."""
    arr = np.asarray(img)
    if arr.ndim == 2 and arr.size and arr.max() <= 1:
        arr = arr.astype(np.uint8) * 255
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(arr.astype(np.uint8))).save(path, format="PNG")
