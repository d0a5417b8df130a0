"""
Checking LIME against a classifier whose answer we know
=======================================================

A stub classifier scores an image by which superpixels were left intact,
with fixed weights.  LIME never sees those weights, only the stub's
outputs, yet its local linear model should hand them back.
"""

import numpy as np

from spectro_explain.limexp import LimeParams, explain
from spectro_explain.pipeline import golden_image
from spectro_explain.quickseg import quickshift
from spectro_explain.synthgen import SignalBank, default_manifest

manifest = default_manifest(seed=0)
image = golden_image(manifest, SignalBank.render(manifest))
segmap = quickshift(image)
masks = [segmap.labels == s for s in range(segmap.n_segments)]

weights = np.zeros(segmap.n_segments)
weights[[3, 7, 9]] = [0.6, 0.3, 0.1]


class Stub:
    n_classes = 2

    def predict_proba(self, batch):
        intact = np.stack([(batch[:, m] == image[m]).all(axis=1) for m in masks], axis=1)
        p = intact @ weights
        return np.stack([p, 1 - p], axis=1)


exp = explain(image, segmap, Stub(), 0, LimeParams(n_samples=500, ridge_lambda=1e-3), np.random.default_rng(0))
print("top segments", exp.top_segments)
print("recovered weights", np.round(exp.superpixel_weights[[3, 7, 9]], 4))
print("local R^2", round(exp.local_r2, 6))

# With the default ridge penalty the weights shrink but the ranking holds.
exp = explain(image, segmap, Stub(), 0, LimeParams(n_samples=500), np.random.default_rng(0))
print("lambda=1:", exp.top_segments, np.round(exp.superpixel_weights[[3, 7, 9]], 4))
