"""Quickshift superpixels for single-plane spectrograms.

Each pixel is a point ``(row, col, color_multiplier * value)``.  A Gaussian
Parzen estimate of bandwidth ``kernel_size`` gives every pixel a density;
each pixel then links to its nearest strictly denser neighbour within
``max_dist`` (density ties go to the earlier pixel in row-major order).
Tree roots seed the segments.  Trees are not guaranteed to be spatially
connected because links may jump several pixels, so a post-pass splits each
tree into its 4-connected pieces.  Pieces smaller than ``min_size`` pixels
are then absorbed by the neighbour they share the longest border with: a
one-pixel superpixel filled with its own mean is indistinguishable from the
original, so it could never carry a LIME weight.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numba
import numpy as np
from skimage.measure import label as cc_label


@dataclass(frozen=True)
class QuickshiftParams:
    kernel_size: float = 4.0
    max_dist: float = 8.0
    color_multiplier: float = 100.0
    min_size: int = 8  # 1 keeps every connected piece

    def __post_init__(self):
        if self.kernel_size <= 0 or self.max_dist <= 0:
            raise ValueError("kernel_size and max_dist must be positive")
        if self.min_size < 1:
            raise ValueError("min_size must be >= 1")


@dataclass
class SuperpixelMap:
    labels: np.ndarray  # int32 (rows, cols), ids 0..n_segments-1
    n_segments: int

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels.ravel(), minlength=self.n_segments)


def _density(feat: np.ndarray, sigma: float, radius: int) -> np.ndarray:
    # One vectorized pass per window offset; out-of-image neighbours are
    # padded with +inf so their kernel weight is exactly zero.
    rows, cols = feat.shape
    inv = 1.0 / (2.0 * sigma * sigma)
    pad = np.full((rows + 2 * radius, cols + 2 * radius), np.inf)
    pad[radius : radius + rows, radius : radius + cols] = feat
    dens = np.zeros_like(feat)
    tmp = np.empty_like(feat)
    for dr in range(-radius, radius + 1):
        for dc in range(-radius, radius + 1):
            np.subtract(pad[radius + dr : radius + dr + rows, radius + dc : radius + dc + cols], feat, out=tmp)
            np.square(tmp, out=tmp)
            tmp *= -inv
            np.exp(tmp, out=tmp)
            tmp *= math.exp(-(dr * dr + dc * dc) * inv)
            dens += tmp
    return dens


@numba.njit(cache=True)
def _link(feat, dens, max_dist):
    rows, cols = feat.shape
    radius = int(math.ceil(max_dist))
    limit = max_dist * max_dist
    parent = np.empty(rows * cols, dtype=np.int64)
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            d0 = dens[r, c]
            v = feat[r, c]
            best = np.inf
            best_j = i
            for rr in range(max(0, r - radius), min(rows, r + radius + 1)):
                dr = rr - r
                for cc in range(max(0, c - radius), min(cols, c + radius + 1)):
                    j = rr * cols + cc
                    dj = dens[rr, cc]
                    if dj > d0 or (dj == d0 and j < i):
                        dc = cc - c
                        dv = feat[rr, cc] - v
                        d2 = dr * dr + dc * dc + dv * dv
                        if d2 <= limit and d2 < best:
                            best = d2
                            best_j = j
            parent[i] = best_j
    return parent


@numba.njit(cache=True)
def _roots(parent):
    n = parent.shape[0]
    root = np.empty(n, dtype=np.int64)
    for i in range(n):
        j = i
        while parent[j] != j:
            j = parent[j]
        root[i] = j
    return root


def canonical_labels(labels: np.ndarray) -> np.ndarray:
    """Relabel so segment ids appear in order of their first pixel (row-major)."""
    flat = labels.ravel()
    uniq, first = np.unique(flat, return_index=True)
    order = np.argsort(first, kind="stable")
    remap = np.empty(len(uniq), dtype=np.int64)
    remap[order] = np.arange(len(uniq))
    return remap[np.searchsorted(uniq, flat)].reshape(labels.shape).astype(np.int32)


def split_disconnected(labels: np.ndarray) -> np.ndarray:
    """Give each 4-connected piece of every segment its own id."""
    pieces = cc_label(labels, background=-1, connectivity=1)
    return canonical_labels(pieces)


def _adjacency(labels: np.ndarray, n: int) -> list[Counter]:
    pairs = np.concatenate(
        [
            np.stack([labels[:, :-1].ravel(), labels[:, 1:].ravel()], axis=1),
            np.stack([labels[:-1].ravel(), labels[1:].ravel()], axis=1),
        ]
    )
    pairs = np.sort(pairs[pairs[:, 0] != pairs[:, 1]], axis=1)
    uniq, counts = np.unique(pairs, axis=0, return_counts=True)
    adj = [Counter() for _ in range(n)]
    for (a, b), k in zip(uniq.tolist(), counts.tolist()):
        adj[a][b] += k
        adj[b][a] += k
    return adj


def absorb_small(labels: np.ndarray, min_size: int) -> np.ndarray:
    """Merge segments below ``min_size`` pixels into their longest-border neighbour.

    Smallest segments go first (ties by id); border ties go to the smaller
    id.  Merging two adjacent connected regions keeps every segment connected.
    """
    n = int(labels.max()) + 1
    sizes = np.bincount(labels.ravel(), minlength=n)
    if min_size <= 1 or sizes.min() >= min_size or n == 1:
        return labels
    adj = _adjacency(labels, n)
    parent = np.arange(n)
    for s in np.lexsort((np.arange(n), sizes)).tolist():
        if sizes[s] >= min_size or parent[s] != s or not adj[s]:
            continue
        t = max(adj[s].items(), key=lambda kv: (kv[1], -kv[0]))[0]
        parent[s] = t
        sizes[t] += sizes[s]
        for nb, k in list(adj[s].items()):
            del adj[nb][s]
            if nb != t:
                adj[t][nb] += k
                adj[nb][t] += k
        adj[s] = Counter()
    # resolve chains of merges
    root = parent.copy()
    for i in range(n):
        while root[root[i]] != root[i]:
            root[i] = root[root[i]]
    return canonical_labels(root[labels])


def parzen_density(image: np.ndarray, params: QuickshiftParams) -> np.ndarray:
    feat = np.ascontiguousarray(image, dtype=np.float64) * params.color_multiplier
    return _density(feat, float(params.kernel_size), int(math.ceil(3 * params.kernel_size)))


def quickshift(image, params: QuickshiftParams = QuickshiftParams()) -> SuperpixelMap:
    """Segment a 2-D array (or a ``Spectrogram``) into superpixels.

    The output is deterministic and canonically labeled; every segment is
    nonempty and 4-connected.
    """
    values = getattr(image, "values", image)
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError("image contains non-finite values")
    feat = np.ascontiguousarray(values * params.color_multiplier)
    dens = _density(feat, float(params.kernel_size), int(math.ceil(3 * params.kernel_size)))
    parent = _link(feat, dens, float(params.max_dist))
    roots = _roots(parent).reshape(values.shape)
    labels = absorb_small(split_disconnected(roots), params.min_size)
    return SuperpixelMap(labels=labels, n_segments=int(labels.max()) + 1)
