"""LIME for spectrogram classifiers, written against the bare
``predict_proba`` contract.

One explanation:

1. draw ``n_samples`` binary masks over the superpixels (row 0 is the
   all-ones mask, every other bit is a fair coin);
2. hide the 0-bits by painting each hidden superpixel with its own mean;
3. query the classifier for the target-class probability of each variant;
4. fit a weighted ridge model ``p ~ bits`` with weights
   ``exp(-d**2 / kernel_width**2)``, ``d`` = fraction of superpixels hidden;
5. report the ``top_n`` superpixels with the largest positive coefficients.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, asdict
from typing import Literal

import numpy as np

from .model import Classifier
from .quickseg import SuperpixelMap

Mode = Literal["supporting", "against", "influential"]

# coefficients at or below this count as "not supporting"
POSITIVE_TOL = 1e-10


@dataclass(frozen=True)
class LimeParams:
    n_samples: int = 1000
    kernel_width: float = 0.25
    ridge_lambda: float = 1.0
    top_n: int = 3
    mode: Mode = "supporting"
    batch: int = 250

    def __post_init__(self):
        if self.top_n < 1:
            raise ValueError("top_n must be >= 1")
        if self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be >= 0")
        if self.n_samples < 2:
            raise ValueError("n_samples must be >= 2")
        if self.kernel_width <= 0:
            raise ValueError("kernel_width must be positive")


@dataclass
class Explanation:
    mask: np.ndarray  # bool (rows, cols)
    target_class: int
    superpixel_weights: np.ndarray
    local_r2: float
    top_segments: list[int] = field(default_factory=list)
    intercept: float = 0.0
    too_few_positive: bool = False
    params: dict = field(default_factory=dict)


def segment_means(image: np.ndarray, segmap: SuperpixelMap) -> np.ndarray:
    flat = segmap.labels.ravel()
    sums = np.bincount(flat, weights=np.asarray(image, dtype=np.float64).ravel(), minlength=segmap.n_segments)
    return sums / segmap.sizes()


def fill_image(image: np.ndarray, segmap: SuperpixelMap) -> np.ndarray:
    """The fully hidden image: every superpixel painted with its mean."""
    return segment_means(image, segmap)[segmap.labels].astype(np.asarray(image).dtype)


def perturb_batch(image: np.ndarray, segmap: SuperpixelMap, bits: np.ndarray, fill=None) -> np.ndarray:
    """Render one variant per row of ``bits`` (shape ``(n, n_segments)``)."""
    image = np.asarray(image)
    bits = np.asarray(bits).astype(bool)
    if bits.ndim != 2 or bits.shape[1] != segmap.n_segments:
        raise ValueError(f"mask bits must have shape (n, {segmap.n_segments}), got {bits.shape}")
    if image.shape != segmap.labels.shape:
        raise ValueError("image and superpixel map shapes differ")
    if fill is None:
        fill = fill_image(image, segmap)
    keep = bits.take(segmap.labels.ravel(), axis=1).reshape((len(bits),) + image.shape)
    return np.where(keep, image, fill)


def perturb(image: np.ndarray, segmap: SuperpixelMap, mask_bits) -> np.ndarray:
    mask_bits = np.asarray(mask_bits)
    if mask_bits.shape != (segmap.n_segments,):
        raise ValueError(f"expected {segmap.n_segments} mask bits, got shape {mask_bits.shape}")
    return perturb_batch(image, segmap, mask_bits[None])[0]


def sample_masks(n_samples: int, n_segments: int, rng: np.random.Generator) -> np.ndarray:
    bits = rng.integers(0, 2, size=(n_samples, n_segments), dtype=np.int8).astype(bool)
    bits[0] = True
    return bits


def kernel_weights(bits: np.ndarray, kernel_width: float) -> np.ndarray:
    d = 1.0 - bits.mean(axis=1)
    return np.exp(-(d**2) / kernel_width**2)


def weighted_ridge(X: np.ndarray, y: np.ndarray, w: np.ndarray, lam: float) -> tuple[np.ndarray, float]:
    """Minimize ``sum w (y - b0 - X b)**2 + lam |b|**2``; the intercept is not penalized.

    Solved as an augmented least-squares problem on weighted-centered data,
    which stays well posed at ``lam = 0`` for rank-deficient designs.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    sw = w.sum()
    x_bar = w @ X / sw
    y_bar = w @ y / sw
    root = np.sqrt(w)[:, None]
    A = root * (X - x_bar)
    b = root[:, 0] * (y - y_bar)
    if lam > 0:
        p = X.shape[1]
        A = np.vstack([A, np.sqrt(lam) * np.eye(p)])
        b = np.concatenate([b, np.zeros(p)])
    coef, *_ = np.linalg.lstsq(A, b, rcond=None)
    return coef, float(y_bar - x_bar @ coef)


def weighted_r2(y, y_hat, w) -> float:
    y_bar = np.average(y, weights=w)
    ss_tot = np.sum(w * (y - y_bar) ** 2)
    ss_res = np.sum(w * (y - y_hat) ** 2)
    if ss_tot == 0:
        return 1.0 if ss_res == 0 else 0.0
    return float(1.0 - ss_res / ss_tot)


def query(classifier: Classifier, image, segmap, bits, target_class: int, batch: int = 250) -> np.ndarray:
    """Target-class probability for every perturbation in ``bits``."""
    fill = fill_image(image, segmap)
    out = np.empty(len(bits))
    for i in range(0, len(bits), batch):
        variants = perturb_batch(image, segmap, bits[i : i + batch], fill)
        out[i : i + batch] = classifier.predict_proba(variants)[:, target_class]
    return out


def fit(bits: np.ndarray, probs: np.ndarray, segmap: SuperpixelMap, target_class: int, params: LimeParams) -> Explanation:
    """Local surrogate and top-N mask from already-queried perturbations."""
    w = kernel_weights(bits, params.kernel_width)
    X = bits.astype(np.float64)
    coef, intercept = weighted_ridge(X, probs, w, params.ridge_lambda)
    r2 = weighted_r2(probs, intercept + X @ coef, w)

    order = np.argsort(-coef, kind="stable")
    top = [int(s) for s in order[: params.top_n] if coef[s] > POSITIVE_TOL]
    mask = np.isin(segmap.labels, top)
    return Explanation(
        mask=mask,
        target_class=int(target_class),
        superpixel_weights=coef,
        local_r2=r2,
        top_segments=top,
        intercept=intercept,
        too_few_positive=len(top) < params.top_n,
        params=asdict(params),
    )


def explain(
    image: np.ndarray,
    segmap: SuperpixelMap,
    classifier: Classifier,
    target_class: int,
    params: LimeParams = LimeParams(),
    rng: np.random.Generator | None = None,
) -> Explanation:
    """Explain why ``image`` looks like ``target_class`` to ``classifier``.

    ``target_class`` should be the ground-truth label, even when the
    classifier gets the image wrong.  Only the ``"supporting"`` mode is
    implemented; the other LIME modes raise ``NotImplementedError``.
    """
    if params.mode != "supporting":
        raise NotImplementedError(f"LIME mode {params.mode!r} is not implemented")
    if not 0 <= target_class < classifier.n_classes:
        raise ValueError(f"target_class {target_class} outside [0, {classifier.n_classes})")
    if rng is None:
        rng = np.random.default_rng()
    if params.n_samples < segmap.n_segments:
        warnings.warn(
            f"n_samples={params.n_samples} < n_segments={segmap.n_segments}; surrogate is underdetermined",
            stacklevel=2,
        )
    bits = sample_masks(params.n_samples, segmap.n_segments, rng)
    probs = query(classifier, image, segmap, bits, target_class, params.batch)
    return fit(bits, probs, segmap, target_class, params)
