"""
Counting caterpillars on a sheet
================================

The classical pipeline: grayscale, Gaussian blur, invert and Otsu
threshold, erode to split touching larvae, then count connected
components above a minimum area.
"""

import numpy as np

from palmscope.counter import (CountParams, binarize, connected_components, count_caterpillars_classical,
                               erode, gaussian_blur, otsu_threshold)

page = np.full((120, 160, 3), 240, dtype=np.uint8)
for x, y, w, h in [(10, 10, 40, 8), (70, 30, 8, 45), (100, 90, 45, 9), (20, 80, 5, 4)]:
    page[y:y + h, x:x + w] = 20  # dark larvae on light paper; the last one is a speck

gray = page[..., 0]
blurred = gaussian_blur(gray, 5, 1.0)
print("otsu threshold on the inverted page:", otsu_threshold(255 - blurred))

fg = erode(binarize(blurred), "cross3", 1)
comps = connected_components(fg, 8)
print("components:", comps.n_components, "areas:", comps.areas.tolist())

###############################################################################
# The speck survives erosion but falls below ``min_area``.

n, _ = count_caterpillars_classical(page, CountParams(min_area=30))
print("caterpillars:", n)
