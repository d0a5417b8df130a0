"""Class-level aggregation of explanations, frequency projections and
ensemble statistics.

Pipeline per class: sum binary masks pixel-wise, scale by the largest count
so the map lies in [0, 1], integrate over time, take the absolute first
difference along frequency, and finally average those difference profiles
across independently trained models.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.signal import find_peaks

from .limexp import Explanation
from .spectro import FrequencyProfile

TEMPORALITY_FLAG = 0.3


@dataclass
class AggregatedExplanation:
    E: np.ndarray
    class_id: int
    n_explanations: int
    counts: np.ndarray  # unnormalized per-pixel selection counts

    @classmethod
    def from_counts(cls, counts: np.ndarray, class_id: int, n_explanations: int) -> "AggregatedExplanation":
        counts = np.asarray(counts, dtype=np.int64)
        peak = counts.max()
        E = counts / peak if peak > 0 else np.zeros(counts.shape)
        return cls(E=E, class_id=int(class_id), n_explanations=int(n_explanations), counts=counts)


@dataclass
class EnsembleProfile:
    mean: FrequencyProfile
    std: FrequencyProfile
    n_models: int


def mask_counts(explanations: Iterable[Explanation]) -> tuple[np.ndarray, int, int]:
    """Pixel-wise selection counts, the shared class id and the number of masks."""
    counts = None
    class_id = None
    n = 0
    for e in explanations:
        if class_id is None:
            class_id = e.target_class
        elif e.target_class != class_id:
            raise ValueError(f"mixed classes: {class_id} and {e.target_class}")
        m = np.asarray(e.mask, dtype=np.int64)
        counts = m.copy() if counts is None else counts + m
        n += 1
    if n == 0:
        raise ValueError("no explanations to aggregate")
    return counts, class_id, n


def aggregate(explanations: Sequence[Explanation]) -> AggregatedExplanation:
    counts, class_id, n = mask_counts(explanations)
    return AggregatedExplanation.from_counts(counts, class_id, n)


def merge(parts: Sequence[AggregatedExplanation]) -> AggregatedExplanation:
    """Combine partial aggregates by adding their raw counts, then renormalize."""
    if not parts:
        raise ValueError("nothing to merge")
    ids = {p.class_id for p in parts}
    if len(ids) != 1:
        raise ValueError(f"mixed classes: {sorted(ids)}")
    counts = sum(p.counts for p in parts)
    return AggregatedExplanation.from_counts(counts, ids.pop(), sum(p.n_explanations for p in parts))


def project(agg: AggregatedExplanation, freqs=None) -> FrequencyProfile:
    """Integrate the aggregate over time: one value per frequency row."""
    return FrequencyProfile(values=agg.E.sum(axis=1), kind="lime_projection", freqs=freqs)


def derivative_profile(W: FrequencyProfile | np.ndarray) -> FrequencyProfile:
    """``out[w] = |W[w+1] - W[w]|``; one bin shorter than the input."""
    values = np.asarray(getattr(W, "values", W), dtype=np.float64)
    if values.ndim != 1 or len(values) < 2:
        raise ValueError("derivative needs a 1-D profile with at least 2 bins")
    freqs = getattr(W, "freqs", None)
    if freqs is not None:
        freqs = freqs[:-1]
    return FrequencyProfile(values=np.abs(np.diff(values)), kind="lime_derivative", freqs=freqs)


def ensemble_stats(profiles: Sequence[FrequencyProfile]) -> EnsembleProfile:
    """Per-bin mean and population standard deviation across models."""
    if len(profiles) < 2:
        raise ValueError("ensemble needs at least 2 profiles")
    kinds = {p.kind for p in profiles}
    if len(kinds) != 1:
        raise ValueError(f"mixed profile kinds: {sorted(kinds)}")
    lengths = {p.bins for p in profiles}
    if len(lengths) != 1:
        raise ValueError(f"mixed profile lengths: {sorted(lengths)}")
    stack = np.stack([p.values for p in profiles])
    freqs = profiles[0].freqs
    return EnsembleProfile(
        mean=FrequencyProfile(stack.mean(axis=0), "ensemble_mean", freqs),
        std=FrequencyProfile(stack.std(axis=0), "ensemble_std", freqs),
        n_models=len(profiles),
    )


def peak_threshold(values: np.ndarray) -> float:
    """``median + 3 * MAD`` (raw median absolute deviation, no normal scaling)."""
    med = np.median(values)
    return float(med + 3.0 * np.median(np.abs(values - med)))


def detect_peaks(profile: FrequencyProfile | np.ndarray) -> np.ndarray:
    """Indices of local maxima strictly above :func:`peak_threshold`."""
    values = np.asarray(getattr(profile, "values", profile), dtype=np.float64)
    thr = peak_threshold(values)
    idx, _ = find_peaks(values)
    return idx[values[idx] > thr]


def peak_recall(profile, tone_bins, tolerance: int = 2) -> float:
    """Fraction of ``tone_bins`` with a detected peak within ``tolerance`` bins."""
    tone_bins = np.atleast_1d(np.asarray(tone_bins))
    if tone_bins.size == 0:
        raise ValueError("no tones to recall")
    peaks = detect_peaks(profile)
    if peaks.size == 0:
        return 0.0
    hits = [np.any(np.abs(peaks - b) <= tolerance) for b in tone_bins]
    return float(np.mean(hits))


def noise_floor(profile, tone_bins, exclusion: int = 5) -> float:
    """Median of the bins at least ``exclusion`` bins away from every tone."""
    values = np.asarray(getattr(profile, "values", profile), dtype=np.float64)
    idx = np.arange(len(values))
    tone_bins = np.atleast_1d(np.asarray(tone_bins))
    far = np.all(np.abs(idx[:, None] - tone_bins[None, :]) >= exclusion, axis=1) if tone_bins.size else np.ones(len(idx), bool)
    return float(np.median(values[far]))


def temporality_score(agg: AggregatedExplanation) -> float:
    """Share of the map's variance explained by differences between time columns.

    A class whose explanations sit at fixed times rather than in horizontal
    bands scores high; above ``TEMPORALITY_FLAG`` the map is flagged.
    """
    total = agg.E.var()
    if total == 0:
        return 0.0
    return float(agg.E.mean(axis=0).var() / total)
