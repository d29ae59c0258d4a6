"""
Resizing and seeded augmentation
================================

Images are resized bilinearly and augmented with a composed affine map
(rotation, shear, flips, zoom) about the image center.
"""

import numpy as np

from palmscope.prep import AugmentRanges, augment_image, normalize_pixels, resize_image, sample_steps

img = np.zeros((40, 60, 3), dtype=np.uint8)
img[10:30, 5:25] = (30, 200, 40)  # green square on the left

small = resize_image(img, 30, 20)
print("resized:", small.shape, "normalized max:", normalize_pixels(small).max())

###############################################################################
# Flips and quarter turns are exact; they only move pixels.

flipped = augment_image(img, ["flip_h"])
assert np.array_equal(flipped, img[:, ::-1])

###############################################################################
# Random sweeps draw their steps from configured ranges. The same seed
# always gives the same steps.

for seed in (0, 0, 1):
    steps = sample_steps(np.random.default_rng(seed), AugmentRanges())
    print(seed, [s.to_dict() for s in steps])

out = augment_image(img, ["rotate(30)", "zoom(1.1)"])
print("green pixels before/after rotate+zoom:",
      int((img[..., 1] > 100).sum()), int((out[..., 1] > 100).sum()))
