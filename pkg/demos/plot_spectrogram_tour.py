"""
From raw samples to a 224 x 224 spectrogram
===========================================

Render one synthetic device, cut a 0.1 s window out of it and look at the
two views the rest of the package works with: the log spectrogram the
classifier sees, and the Welch spectrum used as a reference.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from spectro_explain.spectro import StftParams, stft, welch
from spectro_explain.synthgen import default_manifest, sample_window, synthesize_signal

out = Path("demo_output")
out.mkdir(exist_ok=True)

# Class 2 carries two tones, at 62 kHz and 229 kHz, over mains residue and noise.
manifest = default_manifest(seed=0)
spec = manifest.spec(2)
signal = synthesize_signal(spec, spec.n_samples, manifest.sample_rate, manifest.class_seed(2))
print(f"{spec.name}: {len(signal)} samples at {manifest.sample_rate / 1e6:.0f} MHz")

# Windows for the validation split come from the tail of the recording.
rng = np.random.default_rng(0)
w = sample_window(manifest, 200_000, "validation", rng, class_id=2)
window = signal[w.start : w.stop]

params = StftParams()
S = stft(window, params, manifest.sample_rate)
print("spectrogram shape", S.shape)

# Tones show up as horizontal lines; their rows follow from bin = f * n_fft / fs.
rows = params.freq_to_bin(spec.tone_frequencies(), manifest.sample_rate)
print("tone rows", rows.tolist())

fig, (a, b) = plt.subplots(1, 2, figsize=(10, 4))
a.imshow(S.values, origin="lower", aspect="auto", cmap="magma")
a.set_xlabel("time frame")
a.set_ylabel("frequency bin")
P = welch(window, params, manifest.sample_rate)
b.semilogy(P.values)
for r in rows:
    b.axvline(r, color="0.6", ls=":")
b.set_xlabel("frequency bin")
b.set_ylabel("Welch power")
fig.tight_layout()
fig.savefig(out / "spectrogram_tour.png", dpi=100)
