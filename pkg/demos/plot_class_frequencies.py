"""
Which frequencies does the classifier rely on?
==============================================

Train the reference CNN, explain a few dozen validation spectrograms of one
class, stack the LIME masks, collapse time and differentiate along
frequency.  Peaks of that profile should sit next to the class's tones.
Takes a few minutes on one core.
"""

import warnings
from pathlib import Path

import numpy as np

from spectro_explain import plotting
from spectro_explain.aggregate import detect_peaks, peak_recall, temporality_score
from spectro_explain.limexp import LimeParams
from spectro_explain.model import TrainConfig, train
from spectro_explain.pipeline import explain_class, tone_bins
from spectro_explain.synthgen import SignalBank, default_manifest

warnings.simplefilter("ignore")
out = Path("demo_output")
out.mkdir(exist_ok=True)

manifest = default_manifest(seed=0)
bank = SignalBank.render(manifest)
clf, report = train(bank, TrainConfig(seed=0))
print("validation accuracy", report.final_val_accuracy)

cls = 5
res = explain_class([clf], bank, cls, 60, lime_params=LimeParams(n_samples=500), seed=0)
agg = res.aggregate()
D = res.derivative()
bins = tone_bins(manifest, cls)
print("tone bins", bins.tolist())
print("peaks", detect_peaks(D).tolist())
print("recall", peak_recall(D, bins))
print("temporality", round(temporality_score(agg), 3))

plotting.grid_map(agg.E, out / "aggregate.svg", f"class {cls}")
plotting.welch_overlay(res.welch.values, D.values, out / "derivative.svg", "|d projection|", tone_bins=bins)
print("superpixels per spectrogram", int(np.median(res.n_segments)))
