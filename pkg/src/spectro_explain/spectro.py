"""Fixed-shape STFT spectrograms and Welch power profiles.

The reference parameterization is ``n_fft=446, hop=893`` with a periodic
Hann window: 446/2 + 1 = 224 one-sided bins and
floor((200000 - 446) / 893) + 1 = 224 frames, so a 0.1 s window at 2 MHz
lands exactly on the 224x224 classifier grid.  Frames do not overlap (the
hop is about twice the frame length); only magnitudes are kept.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.signal import get_window

GRID = 224
LOG_EPS_REL = 1e-10

ProfileKind = Literal["welch", "lime_projection", "lime_derivative", "ensemble_mean", "ensemble_std"]


@dataclass(frozen=True)
class StftParams:
    n_fft: int = 446
    hop: int = 893
    window_fn: str = "hann"
    one_sided: bool = True
    log_scale: bool = True

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1

    def n_frames(self, n_samples: int) -> int:
        if n_samples < self.n_fft:
            return 0
        return (n_samples - self.n_fft) // self.hop + 1

    def check(self, n_samples: int, grid: int = GRID) -> None:
        if not self.one_sided:
            raise ValueError("only one-sided spectra are supported")
        if self.n_bins != grid:
            raise ValueError(f"n_fft={self.n_fft} gives {self.n_bins} bins, need {grid}")
        frames = self.n_frames(n_samples)
        if frames != grid:
            raise ValueError(
                f"window of {n_samples} samples gives {frames} frames with "
                f"n_fft={self.n_fft}, hop={self.hop}; need {grid}"
            )

    def taper(self) -> np.ndarray:
        return get_window(self.window_fn, self.n_fft, fftbins=True)

    def bin_freqs(self, sample_rate: float) -> np.ndarray:
        return np.arange(self.n_bins) * sample_rate / self.n_fft

    def freq_to_bin(self, freq, sample_rate: float):
        return np.rint(np.asarray(freq) * self.n_fft / sample_rate).astype(int)


@dataclass
class Spectrogram:
    values: np.ndarray  # (freq, time), row 0 = DC
    freq_axis: np.ndarray
    time_axis: np.ndarray
    class_id: int = -1
    log_scaled: bool = False

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass
class FrequencyProfile:
    values: np.ndarray
    kind: ProfileKind
    freqs: np.ndarray | None = field(default=None, repr=False)

    @property
    def bins(self) -> int:
        return len(self.values)


def _frames(window: np.ndarray, params: StftParams) -> np.ndarray:
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 1:
        raise ValueError("window must be 1-D")
    params.check(len(window))
    n = params.n_frames(len(window))
    idx = np.arange(params.n_fft)[None, :] + params.hop * np.arange(n)[:, None]
    return window[idx] * params.taper()[None, :]


def power_frames(window: np.ndarray, params: StftParams) -> np.ndarray:
    """Squared one-sided STFT magnitudes, shape (bins, frames)."""
    spec = np.fft.rfft(_frames(window, params), axis=1)
    return (spec.real**2 + spec.imag**2).T


def stft(
    window: np.ndarray,
    params: StftParams = StftParams(),
    sample_rate: float = 2_000_000.0,
    class_id: int = -1,
) -> Spectrogram:
    """Magnitude spectrogram of one window.

    With ``params.log_scale`` the values are ``log(|X| + eps)`` where
    ``eps = 1e-10 * max|X|`` (or 1e-10 for an all-zero window).
    """
    mag = np.sqrt(power_frames(window, params))
    if params.log_scale:
        peak = mag.max()
        eps = LOG_EPS_REL * peak if peak > 0 else LOG_EPS_REL
        mag = np.log(mag + eps)
    n_frames = mag.shape[1]
    times = (np.arange(n_frames) * params.hop + params.n_fft / 2) / sample_rate
    return Spectrogram(
        values=mag,
        freq_axis=params.bin_freqs(sample_rate),
        time_axis=times,
        class_id=class_id,
        log_scaled=params.log_scale,
    )


def welch(
    window: np.ndarray, params: StftParams = StftParams(), sample_rate: float = 2_000_000.0
) -> FrequencyProfile:
    """Mean over frames of squared STFT magnitude (unscaled periodogram average)."""
    p = power_frames(window, params).mean(axis=1)
    return FrequencyProfile(values=p, kind="welch", freqs=params.bin_freqs(sample_rate))


def onesided_weights(n_fft: int) -> np.ndarray:
    """Multiplicity of each one-sided bin in the full spectrum (1 for DC/Nyquist, else 2)."""
    w = np.full(n_fft // 2 + 1, 2.0)
    w[0] = 1.0
    if n_fft % 2 == 0:
        w[-1] = 1.0
    return w


def normalize(values: np.ndarray) -> np.ndarray:
    """Min-max scale to [0, 1]; a constant image maps to zeros."""
    values = np.asarray(values, dtype=np.float64)
    lo, hi = values.min(), values.max()
    if hi <= lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def classifier_input(window: np.ndarray, params: StftParams = StftParams()) -> np.ndarray:
    """Normalized float32 log-spectrogram, the canonical model and explainer input."""
    return normalize(stft(window, params).values).astype(np.float32)
