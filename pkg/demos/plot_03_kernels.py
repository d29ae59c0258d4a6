"""
Reference network kernels
=========================

Plain numpy versions of the building blocks of a convolutional
classifier: valid-region 2-D convolution, ReLU, max pooling and a
dense layer.
"""

import numpy as np

from palmscope.nnref import conv2d, dense_forward, max_pool, relu

img = np.zeros((6, 6))
img[:, 3:] = 10.0  # a vertical step edge
img[4:, :] += 5.0  # and a horizontal one, which this kernel ignores

# A horizontal-gradient kernel. Output shrinks by 2 in each direction.
kern = np.array([[-1.0, 0.0, 1.0]] * 3)
fm = conv2d(img, kern)
print("feature map", fm.shape)
print(fm)

###############################################################################
# ReLU keeps only rising edges; 2x2 pooling keeps the strongest response.

pooled = max_pool(relu(fm), 2, 2)
print("pooled:\n", pooled)

###############################################################################
# A dense layer computes ``W.T @ x + b``.

x = pooled.ravel()
W = np.ones((x.size, 2))
print("dense:", dense_forward(W, x, np.array([0.0, -1.0])))
