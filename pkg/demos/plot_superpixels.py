"""
Quickshift superpixels on a spectrogram
=======================================

LIME perturbs whole superpixels, so their size sets the resolution of every
explanation.  Here the calibration spectrogram is segmented at the default
color multiplier and at a few others.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
from skimage.segmentation import mark_boundaries

from spectro_explain.pipeline import golden_image
from spectro_explain.quickseg import QuickshiftParams, quickshift
from spectro_explain.synthgen import SignalBank, default_manifest

out = Path("demo_output")
out.mkdir(exist_ok=True)

manifest = default_manifest(seed=0)
bank = SignalBank.render(manifest)
image = golden_image(manifest, bank)

# A bigger multiplier weighs pixel values more than position, which breaks
# the image into many small pieces.
fig, axes = plt.subplots(1, 3, figsize=(12, 4))
for ax, cm in zip(axes, (30.0, 100.0, 300.0)):
    seg = quickshift(image, QuickshiftParams(color_multiplier=cm))
    ax.imshow(mark_boundaries(image, seg.labels), origin="lower", aspect="auto")
    ax.set_title(f"color_multiplier={cm:g}: {seg.n_segments} segments")
    print(cm, seg.n_segments, "smallest", seg.sizes().min())
fig.tight_layout()
fig.savefig(out / "superpixels.png", dpi=100)
