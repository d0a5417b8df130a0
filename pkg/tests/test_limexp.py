import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spectro_explain.limexp import (
    LimeParams,
    explain,
    fill_image,
    kernel_weights,
    perturb,
    perturb_batch,
    sample_masks,
    segment_means,
    weighted_r2,
    weighted_ridge,
)
from spectro_explain.pipeline import golden_image
from spectro_explain.quickseg import SuperpixelMap, quickshift


def block_segmap(size=32, block=8):
    r, c = np.divmod(np.arange(size * size), size)
    labels = (r // block) * (size // block) + c // block
    return SuperpixelMap(labels=labels.reshape(size, size).astype(np.int32), n_segments=(size // block) ** 2)


class LinearStub:
    """Target probability is a fixed linear function of which segments are intact."""

    def __init__(self, image, segmap, coef, target=0, n_classes=4):
        self.image = image
        self.segmap = segmap
        self.coef = np.asarray(coef, dtype=float)
        self.target = target
        self.n_classes = n_classes

    def bits_of(self, batch):
        lab = self.segmap.labels
        same = np.isclose(batch, self.image[None]).reshape(len(batch), -1)
        return np.stack([same[:, lab.ravel() == s].all(axis=1) for s in range(self.segmap.n_segments)], axis=1)

    def predict_proba(self, batch):
        p = self.bits_of(np.asarray(batch)).astype(float) @ self.coef
        out = np.repeat(((1 - p) / (self.n_classes - 1))[:, None], self.n_classes, axis=1)
        out[:, self.target] = p
        return out


class ConstantStub:
    n_classes = 3

    def predict_proba(self, batch):
        return np.tile([0.2, 0.5, 0.3], (len(batch), 1))


def textured(size=32, seed=0):
    return np.random.default_rng(seed).random((size, size)).astype(np.float32)


def normal_equations(X, y, w, lam):
    # explicit closed form with an unpenalized intercept column
    Xa = np.hstack([np.ones((len(X), 1)), X])
    P = lam * np.eye(Xa.shape[1])
    P[0, 0] = 0.0
    beta = np.linalg.solve(Xa.T @ (w[:, None] * Xa) + P, Xa.T @ (w * y))
    return beta[1:], beta[0]


def test_perturb_identity_and_full_fill():
    img, seg = textured(), block_segmap()
    assert np.array_equal(perturb(img, seg, np.ones(16, bool)), img)
    hidden = perturb(img, seg, np.zeros(16, bool))
    np.testing.assert_allclose(hidden, segment_means(img, seg)[seg.labels], rtol=1e-6)
    assert np.array_equal(hidden, fill_image(img, seg))


@pytest.mark.parametrize("s", [0, 5, 15])
def test_single_bit_off_changes_exactly_that_segment(s):
    img, seg = textured(), block_segmap()
    bits = np.ones(16, bool)
    bits[s] = False
    diff = perturb(img, seg, bits) != img
    assert np.array_equal(diff, seg.labels == s)


def test_perturb_length_mismatch():
    with pytest.raises(ValueError):
        perturb(textured(), block_segmap(), np.ones(15, bool))
    with pytest.raises(ValueError):
        perturb_batch(textured(), block_segmap(), np.ones((2, 17), bool))


def test_masks_and_kernel():
    bits = sample_masks(4000, 30, np.random.default_rng(0))
    assert bits[0].all()
    assert abs(bits[1:].mean() - 0.5) < 0.01
    w = kernel_weights(bits, 0.25)
    assert w[0] == 1.0
    d = 1 - bits[1].mean()
    assert w[1] == pytest.approx(np.exp(-(d**2) / 0.0625))


@settings(max_examples=30, deadline=None)
@given(
    n=st.integers(20, 200),
    p=st.integers(1, 12),
    lam=st.sampled_from([0.0, 1e-3, 0.5, 3.0]),
    seed=st.integers(0, 10_000),
)
def test_weighted_ridge_matches_normal_equations(n, p, lam, seed):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 2, size=(n, p)).astype(float)
    y = rng.normal(size=n)
    w = rng.uniform(0.1, 1.0, n)
    if lam == 0.0 and np.linalg.matrix_rank(np.hstack([np.ones((n, 1)), X])) < p + 1:
        return
    coef, b0 = weighted_ridge(X, y, w, lam)
    ref_coef, ref_b0 = normal_equations(X, y, w, lam)
    np.testing.assert_allclose(coef, ref_coef, atol=1e-8)
    assert b0 == pytest.approx(ref_b0, abs=1e-8)


def test_weighted_r2_perfect_and_constant():
    y = np.array([1.0, 2.0, 3.0])
    w = np.ones(3)
    assert weighted_r2(y, y, w) == 1.0
    assert weighted_r2(np.ones(3), np.ones(3), w) == 1.0


@pytest.mark.parametrize("seed", range(10))
def test_linear_stub_top3_recovered(seed):
    img, seg = textured(seed=seed), block_segmap()
    coef = np.zeros(16)
    coef[[3, 7, 9]] = [0.6, 0.3, 0.1]
    stub = LinearStub(img, seg, coef)
    params = LimeParams(n_samples=500, ridge_lambda=1e-3)
    exp = explain(img, seg, stub, 0, params, np.random.default_rng(seed))
    assert exp.top_segments == [3, 7, 9]
    assert not exp.too_few_positive
    assert np.array_equal(exp.mask, np.isin(seg.labels, [3, 7, 9]))

    bits = sample_masks(500, 16, np.random.default_rng(seed))
    y = bits.astype(float) @ coef
    ref, _ = normal_equations(bits.astype(float), y, kernel_weights(bits, 0.25), 1e-3)
    np.testing.assert_allclose(exp.superpixel_weights, ref, atol=1e-8)
    assert exp.local_r2 == pytest.approx(1.0, abs=1e-6)


def test_constant_stub_has_no_support():
    img, seg = textured(), block_segmap()
    exp = explain(img, seg, ConstantStub(), 1, LimeParams(n_samples=200), np.random.default_rng(0))
    assert np.all(np.abs(exp.superpixel_weights) < 1e-6)
    assert exp.top_segments == [] and exp.too_few_positive
    assert not exp.mask.any()


def test_fewer_positive_than_top_n_is_flagged():
    img, seg = textured(), block_segmap()
    coef = np.zeros(16)
    coef[4] = 0.5
    exp = explain(img, seg, LinearStub(img, seg, coef), 0, LimeParams(n_samples=300, ridge_lambda=1e-3), np.random.default_rng(1))
    assert exp.top_segments[0] == 4
    assert exp.too_few_positive == (len(exp.top_segments) < 3)
    assert np.array_equal(exp.mask, np.isin(seg.labels, exp.top_segments))


def test_mode_and_target_validation():
    img, seg = textured(), block_segmap()
    with pytest.raises(NotImplementedError):
        explain(img, seg, ConstantStub(), 0, LimeParams(mode="against"))
    with pytest.raises(ValueError):
        explain(img, seg, ConstantStub(), 3)
    with pytest.raises(ValueError):
        LimeParams(top_n=0)
    with pytest.raises(ValueError):
        LimeParams(ridge_lambda=-1)


def test_warns_when_underdetermined():
    img, seg = textured(), block_segmap()
    with pytest.warns(UserWarning):
        explain(img, seg, ConstantStub(), 0, LimeParams(n_samples=10), np.random.default_rng(0))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        explain(img, seg, ConstantStub(), 0, LimeParams(n_samples=20), np.random.default_rng(0))


def test_deterministic_given_rng():
    img, seg = textured(), block_segmap()
    coef = np.linspace(0, 0.2, 16)
    stub = LinearStub(img, seg, coef)
    a = explain(img, seg, stub, 0, LimeParams(n_samples=100), np.random.default_rng(9))
    b = explain(img, seg, stub, 0, LimeParams(n_samples=100), np.random.default_rng(9))
    assert np.array_equal(a.superpixel_weights, b.superpixel_weights)
    assert a.top_segments == b.top_segments


@pytest.mark.xfail(
    strict=True,
    reason="in-sample R2 overfits when n_samples < n_segments (0.70 at 200 vs 0.41 at 2000 on the 220-superpixel golden image)",
)
def test_fit_quality_does_not_degrade_with_samples(manifest, bank, trained):
    clf, _ = trained
    img = golden_image(manifest, bank)
    seg = quickshift(img)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        small = explain(img, seg, clf, 0, LimeParams(n_samples=200), np.random.default_rng(0))
    large = explain(img, seg, clf, 0, LimeParams(n_samples=2000), np.random.default_rng(0))
    assert large.local_r2 >= small.local_r2 - 0.05
    assert np.array_equal(large.mask, np.isin(seg.labels, large.top_segments))
