"""Leaflet crop segmentation and necrosis progression scoring.

The pipeline masks a leaflet out of its image, collapses healthy and necrotic
shades to two marker colors (everything else becomes the background marker),
clusters the quantized pixels with a marker-seeded K-means, and reports the
green/brown split of the leaf area.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .imgcore import HsvRange, as_image, as_mask, in_range, rgb_to_hsv_image

RGB = tuple[int, int, int]

GREEN_MARKER: RGB = (20, 255, 10)
# The published marker (19, 69, 139) is written in B, G, R order; in R, G, B it
# would be dark blue. Stored here as the saddle brown it is meant to be.
BROWN_MARKER: RGB = (139, 69, 19)
BACKGROUND_MARKER: RGB = (255, 255, 255)

DEFAULT_GREEN_RANGE = HsvRange.from_bounds((60.0, 170.0), (0.15, 1.0), (0.15, 1.0))
DEFAULT_BROWN_RANGE = HsvRange.from_bounds((5.0, 45.0), (0.2, 1.0), (0.1, 0.85))

MAX_KMEANS_ITER = 100


class NoLeafError(ValueError):
    """Raised when a leaflet has neither green nor brown pixels."""


@dataclass(frozen=True)
class ColorScheme:
    green_marker: RGB = GREEN_MARKER
    brown_marker: RGB = BROWN_MARKER
    background_marker: RGB = BACKGROUND_MARKER
    green_range: HsvRange = DEFAULT_GREEN_RANGE
    brown_range: HsvRange = DEFAULT_BROWN_RANGE

    def __post_init__(self):
        markers = [tuple(int(c) for c in m) for m in (self.green_marker, self.brown_marker, self.background_marker)]
        for m in markers:
            if len(m) != 3 or not all(0 <= c <= 255 for c in m):
                raise ValueError(f"marker {m} is not an 8-bit RGB triple")
        if len(set(markers)) != 3:
            raise ValueError("green, brown and background markers must be distinct")
        object.__setattr__(self, "green_marker", markers[0])
        object.__setattr__(self, "brown_marker", markers[1])
        object.__setattr__(self, "background_marker", markers[2])

    @property
    def markers(self) -> tuple[RGB, RGB, RGB]:
        return (self.green_marker, self.brown_marker, self.background_marker)


@dataclass(frozen=True)
class ProgressionReport:
    green_perc: int
    brown_perc: int
    leaf_pixels: int
    mask_index: int = 0

    @property
    def progression(self) -> int:
        return self.brown_perc

    def to_dict(self) -> dict:
        return {
            "mask_index": self.mask_index,
            "green_perc": self.green_perc,
            "brown_perc": self.brown_perc,
            "leaf_pixels": self.leaf_pixels,
        }


@dataclass
class ClusterResult:
    centers: np.ndarray
    labels: np.ndarray
    counts: np.ndarray
    inertia: float
    n_iter: int = 0
    # inertia after every assignment step, for convergence diagnostics
    inertia_history: list[float] = field(default_factory=list)


def crop_segment(img, masks: Sequence) -> list[np.ndarray]:
    """Multiply every channel by each instance mask; one output image per mask."""
    img = as_image(img)
    out = []
    for i, m in enumerate(masks):
        m = as_mask(m)
        if m.shape != img.shape[:2]:
            raise ValueError(f"mask {i} has shape {m.shape}, image is {img.shape[:2]}")
        out.append(img * m[:, :, None])
    return out


def quantize_colors(img, scheme: ColorScheme, leaf_mask) -> np.ndarray:
    img = as_image(img)
    mask = as_mask(leaf_mask).astype(bool)
    if mask.shape != img.shape[:2]:
        raise ValueError(f"mask shape {mask.shape} does not match image {img.shape[:2]}")
    hsv = rgb_to_hsv_image(img)
    green = in_range(hsv, scheme.green_range).astype(bool) & mask
    brown = in_range(hsv, scheme.brown_range).astype(bool) & mask & ~green
    out = np.empty_like(img)
    out[...] = scheme.background_marker
    out[green] = scheme.green_marker
    out[brown] = scheme.brown_marker
    return out


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("nkc,nkc->nk", diff, diff)


def kmeans_cluster(pixels, k: int, seeds) -> ClusterResult:
    """Lloyd's algorithm from fixed seeds.

    Ties go to the lowest center index; an empty cluster keeps its previous
    center. Stops when assignments repeat or after ``MAX_KMEANS_ITER`` rounds.
    """
    pts = np.asarray(pixels, dtype=np.float64)
    if pts.ndim != 2:
        pts = pts.reshape(-1, 3)
    if pts.shape[0] == 0:
        raise ValueError("kmeans_cluster needs at least one pixel")
    if k < 1:
        raise ValueError("k must be >= 1")
    centers = np.array(seeds, dtype=np.float64).reshape(k, pts.shape[1])
    if len({tuple(c) for c in centers}) != k:
        raise ValueError("seeds must be pairwise distinct")

    labels = None
    history: list[float] = []
    n_iter = 0
    for n_iter in range(1, MAX_KMEANS_ITER + 1):
        d = _sq_dists(pts, centers)
        new_labels = np.argmin(d, axis=1)
        history.append(float(d[np.arange(len(pts)), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, pts)
        filled = counts > 0
        centers[filled] = sums[filled] / counts[filled, None]

    labels = new_labels
    counts = np.bincount(labels, minlength=k)
    # centers may have moved after the last assignment when the cap is hit
    inertia = float(_sq_dists(pts, centers)[np.arange(len(pts)), labels].sum())
    return ClusterResult(centers, labels, counts, inertia, n_iter, history)


def _percent(part: int, total: int) -> int:
    # round(100 * part / total) half away from zero, in exact integer arithmetic
    return (200 * part + total) // (2 * total)


def compute_progression(img, mask, scheme: ColorScheme | None = None, mask_index: int = 0) -> ProgressionReport:
    scheme = scheme or ColorScheme()
    quantized = quantize_colors(img, scheme, mask)
    result = kmeans_cluster(quantized.reshape(-1, 3), 3, scheme.markers)

    marker_arr = np.asarray(scheme.markers[:2], dtype=np.float64)
    nearest = np.argmin(_sq_dists(marker_arr, result.centers), axis=1)
    g_idx, b_idx = int(nearest[0]), int(nearest[1])
    g_count = int(result.counts[g_idx])
    b_count = int(result.counts[b_idx]) if b_idx != g_idx else 0

    total = g_count + b_count
    if total == 0:
        raise NoLeafError(f"mask {mask_index} covers no green or brown pixels")
    green = _percent(g_count, total)
    return ProgressionReport(green, 100 - green, total, mask_index)


def score_leaflets(img, masks: Sequence, scheme: ColorScheme | None = None) -> list[ProgressionReport | NoLeafError]:
    """Crop-segment ``img`` by each mask and score every leaflet in input order.

    Leaflets without leaf pixels yield their :class:`NoLeafError` in place.
    """
    scheme = scheme or ColorScheme()
    crops = crop_segment(img, masks)
    results: list[ProgressionReport | NoLeafError] = []
    for i, (crop, m) in enumerate(zip(crops, masks)):
        try:
            results.append(compute_progression(crop, m, scheme, mask_index=i))
        except NoLeafError as exc:
            results.append(exc)
    return results
