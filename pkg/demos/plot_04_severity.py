"""
Leaflet necrosis progression
============================

Crop a leaflet with its mask, quantize colors into green, brown and
background markers with HSV ranges, then cluster with K-means seeded at
the markers. The brown share of leaf pixels is the progression level.
"""

import numpy as np

from palmscope.severity import ColorScheme, compute_progression, crop_segment, quantize_colors

rng = np.random.default_rng(3)
h, w = 80, 120
yy, xx = np.mgrid[0:h, 0:w]
mask = (((xx - 60) / 50.0) ** 2 + ((yy - 40) / 30.0) ** 2 <= 1).astype(np.uint8)

# Healthy tissue in a few green shades, and a brown necrotic tip.
img = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)  # background clutter
greens = np.array([(40, 160, 50), (60, 190, 70), (30, 120, 35)], dtype=np.uint8)
img[mask == 1] = greens[rng.integers(0, 3, size=int(mask.sum()))]
tip = (mask == 1) & (xx > 85)
img[tip] = (139, 69, 19)

(crop,) = crop_segment(img, [mask])
quantized = quantize_colors(crop, ColorScheme(), mask)
report = compute_progression(crop, mask)
print(report.to_dict())
print("direct tally of brown share: %.1f%%" % (100 * tip.sum() / mask.sum()))

###############################################################################
# Colors outside both ranges (here the clutter) are background and never
# count toward the leaf.

print("distinct quantized colors:", np.unique(quantized.reshape(-1, 3), axis=0).tolist())
