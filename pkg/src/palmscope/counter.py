"""Classical caterpillar counting: gray -> blur -> invert/threshold -> erode -> label."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .imgcore import as_gray, as_mask, rgb_to_gray, round_half_away

ThresholdMode = Union[str, int]

_STRUCTURES = {
    "cross3": np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool),
    "square3": np.ones((3, 3), dtype=bool),
}


@dataclass(frozen=True)
class CountParams:
    blur_kernel: int = 5
    blur_sigma: float = 1.0
    threshold: ThresholdMode = "otsu"
    erode_kernel: str = "cross3"
    erode_iterations: int = 1
    connectivity: int = 8
    min_area: int = 30

    def __post_init__(self):
        if self.blur_kernel < 1 or self.blur_kernel % 2 == 0:
            raise ValueError("blur_kernel must be odd and >= 1")
        if not self.blur_sigma > 0:
            raise ValueError("blur_sigma must be > 0")
        if self.threshold != "otsu" and not (isinstance(self.threshold, int) and 0 <= self.threshold <= 255):
            raise ValueError("threshold must be 'otsu' or an integer in [0, 255]")
        if self.erode_kernel not in _STRUCTURES:
            raise ValueError(f"erode_kernel must be one of {sorted(_STRUCTURES)}")
        if self.erode_iterations < 0:
            raise ValueError("erode_iterations must be >= 0")
        if self.connectivity not in (4, 8):
            raise ValueError("connectivity must be 4 or 8")
        if self.min_area < 0:
            raise ValueError("min_area must be >= 0")


@dataclass
class ComponentLabels:
    labels: np.ndarray  # (H, W) int32, 0 = background
    n_components: int
    areas: np.ndarray  # areas[i] is the pixel count of label i + 1

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]


def gaussian_kernel_1d(size: int, sigma: float) -> np.ndarray:
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd and >= 1, got {size}")
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    r = size // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    w = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return w / w.sum()


def gaussian_blur(img, kernel: int, sigma: float) -> np.ndarray:
    """Separable Gaussian with nearest-edge replication; rounded back to uint8."""
    gray = as_gray(img).astype(np.float64)
    w = gaussian_kernel_1d(kernel, sigma)
    r = kernel // 2
    h, wd = gray.shape
    padded = np.pad(gray, r, mode="edge")
    tmp = np.zeros((h + 2 * r, wd))
    for t, wt in enumerate(w):
        tmp += wt * padded[:, t: t + wd]
    out = np.zeros((h, wd))
    for t, wt in enumerate(w):
        out += wt * tmp[t: t + h, :]
    return np.clip(round_half_away(out), 0, 255).astype(np.uint8)


def otsu_threshold(img) -> int:
    """Threshold ``t`` maximizing between-class variance of ``{v <= t}`` vs ``{v > t}``.

    Only splits leaving both classes non-empty are considered; ties resolve to
    the smallest ``t``. A single-valued image returns that value, so nothing
    lies above it.
    """
    gray = as_gray(img)
    hist = np.bincount(gray.ravel(), minlength=256).astype(np.float64)
    total = hist.sum()
    levels = np.arange(256, dtype=np.float64)
    w0 = np.cumsum(hist)
    w1 = total - w0
    s0 = np.cumsum(hist * levels)
    mu_total = s0[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        m0 = s0 / w0
        m1 = (mu_total - s0) / w1
        between = w0 * w1 * (m0 - m1) ** 2
    valid = (w0 > 0) & (w1 > 0)
    if not valid.any():
        return int(gray.max())
    between = np.where(valid, between, -1.0)
    best = between.max()
    # relative slack absorbs float noise between equally good thresholds
    return int(np.flatnonzero(between >= best * (1 - 1e-12))[0])


def binarize(img, mode: ThresholdMode = "otsu") -> np.ndarray:
    """Invert (``255 - v``) then mark pixels strictly above the threshold."""
    inv = 255 - as_gray(img)
    t = otsu_threshold(inv) if mode == "otsu" else int(mode)
    return (inv > t).astype(np.uint8)


def erode(mask, kernel: str = "cross3", iterations: int = 1) -> np.ndarray:
    """Binary erosion; pixels beyond the frame count as background."""
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    try:
        se = _STRUCTURES[kernel]
    except KeyError:
        raise ValueError(f"unknown structuring element {kernel!r}") from None
    cur = as_mask(mask).astype(bool)
    h, w = cur.shape
    offsets = [(dy - 1, dx - 1) for dy in range(3) for dx in range(3) if se[dy, dx]]
    for _ in range(iterations):
        padded = np.pad(cur, 1, constant_values=False)
        nxt = np.ones_like(cur)
        for dy, dx in offsets:
            nxt &= padded[1 + dy: 1 + dy + h, 1 + dx: 1 + dx + w]
        cur = nxt
    return cur.astype(np.uint8)


def _find(parent: list[int], a: int) -> int:
    root = a
    while parent[root] != root:
        root = parent[root]
    while parent[a] != root:
        parent[a], a = root, parent[a]
    return root


def connected_components(mask, connectivity: int = 8) -> ComponentLabels:
    """Label foreground regions 1..n in row-major order of first appearance.

    Works on horizontal runs: each run is unioned with the overlapping runs of
    the row above (overlap widened by one pixel for 8-connectivity).
    """
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    m = as_mask(mask).astype(np.int8)
    h, w = m.shape
    reach = 1 if connectivity == 8 else 0

    runs: list[tuple[int, int, int]] = []  # (row, start, stop)
    parent: list[int] = []
    prev: list[int] = []  # run ids in the previous row
    for y in range(h):
        edges = np.diff(np.concatenate(([0], m[y], [0])))
        starts = np.flatnonzero(edges == 1)
        stops = np.flatnonzero(edges == -1)
        cur: list[int] = []
        p = 0
        for s, e in zip(starts.tolist(), stops.tolist()):
            rid = len(runs)
            runs.append((y, s, e))
            parent.append(rid)
            cur.append(rid)
            # skip runs above that end before this one can touch them
            while p < len(prev) and runs[prev[p]][2] + reach <= s:
                p += 1
            q = p
            while q < len(prev) and runs[prev[q]][1] < e + reach:
                ra, rb = _find(parent, rid), _find(parent, prev[q])
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
                q += 1
        prev = cur

    labels = np.zeros((h, w), dtype=np.int32)
    final: dict[int, int] = {}
    for rid, (y, s, e) in enumerate(runs):
        root = _find(parent, rid)
        lab = final.setdefault(root, len(final) + 1)
        labels[y, s:e] = lab
    n = len(final)
    areas = np.bincount(labels.ravel(), minlength=n + 1)[1:].astype(np.int64)
    return ComponentLabels(labels, n, areas)


def count_caterpillars_classical(img, params: CountParams | None = None) -> tuple[int, ComponentLabels]:
    """Run the full classical pipeline; returns (count, component labels).

    Only components with at least ``params.min_area`` pixels are counted.
    """
    params = params or CountParams()
    gray = rgb_to_gray(img)
    blurred = gaussian_blur(gray, params.blur_kernel, params.blur_sigma)
    binary = binarize(blurred, params.threshold)
    eroded = erode(binary, params.erode_kernel, params.erode_iterations)
    comps = connected_components(eroded, params.connectivity)
    count = int(np.count_nonzero(comps.areas >= params.min_area))
    return count, comps
