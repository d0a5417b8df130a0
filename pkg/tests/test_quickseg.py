import math
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spectro_explain.pipeline import golden_image
from spectro_explain.quickseg import (
    QuickshiftParams,
    SuperpixelMap,
    canonical_labels,
    parzen_density,
    quickshift,
    split_disconnected,
    absorb_small,
)


def brute_quickshift(image, kernel_size, max_dist, cm):
    """O(N^2) reference: pairwise distances, explicit trees, BFS connectivity."""
    rows, cols = image.shape
    rr, cc = np.divmod(np.arange(rows * cols), cols)
    v = image.ravel() * cm
    radius = math.ceil(3 * kernel_size)
    dens = np.zeros(rows * cols)
    for i in range(rows * cols):
        for j in range(rows * cols):
            if abs(rr[i] - rr[j]) <= radius and abs(cc[i] - cc[j]) <= radius:
                d2 = (rr[i] - rr[j]) ** 2 + (cc[i] - cc[j]) ** 2 + (v[i] - v[j]) ** 2
                dens[i] += math.exp(-d2 / (2 * kernel_size**2))
    parent = np.arange(rows * cols)
    for i in range(rows * cols):
        best = math.inf
        for j in range(rows * cols):
            if dens[j] > dens[i] or (dens[j] == dens[i] and j < i):
                d2 = (rr[i] - rr[j]) ** 2 + (cc[i] - cc[j]) ** 2 + (v[i] - v[j]) ** 2
                if d2 <= max_dist**2 and d2 < best:
                    best, parent[i] = d2, j
    root = parent.copy()
    for i in range(len(root)):
        while parent[root[i]] != root[i]:
            root[i] = parent[root[i]]
    tree = root.reshape(rows, cols)
    out = -np.ones((rows, cols), dtype=int)
    nxt = 0
    for r in range(rows):
        for c in range(cols):
            if out[r, c] >= 0:
                continue
            out[r, c] = nxt
            q = deque([(r, c)])
            while q:
                a, b = q.popleft()
                for da, db in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    x, y = a + da, b + db
                    if 0 <= x < rows and 0 <= y < cols and out[x, y] < 0 and tree[x, y] == tree[r, c]:
                        out[x, y] = nxt
                        q.append((x, y))
            nxt += 1
    return out


def is_four_connected(mask):
    pts = np.argwhere(mask)
    seen = {tuple(pts[0])}
    q = deque([tuple(pts[0])])
    while q:
        a, b = q.popleft()
        for x, y in ((a + 1, b), (a - 1, b), (a, b + 1), (a, b - 1)):
            if 0 <= x < mask.shape[0] and 0 <= y < mask.shape[1] and mask[x, y] and (x, y) not in seen:
                seen.add((x, y))
                q.append((x, y))
    return len(seen) == len(pts)


def check_partition(seg: SuperpixelMap, shape):
    assert seg.labels.shape == shape
    assert seg.labels.min() == 0 and seg.labels.max() == seg.n_segments - 1
    sizes = seg.sizes()
    assert np.all(sizes > 0)
    assert sizes.sum() == shape[0] * shape[1]


def test_two_halves_give_two_segments():
    img = np.zeros((16, 16))
    img[:, 8:] = 1.0
    seg = quickshift(img, QuickshiftParams(color_multiplier=100.0, min_size=1))
    oracle = brute_quickshift(img, 4.0, 8.0, 100.0)
    assert seg.n_segments == 2 == oracle.max() + 1
    assert np.all(seg.labels[:, :8] == 0) and np.all(seg.labels[:, 8:] == 1)
    assert np.array_equal(seg.labels, oracle)


@pytest.mark.parametrize("seed", range(4))
def test_matches_brute_force_on_random_images(seed):
    rng = np.random.default_rng(seed)
    img = rng.random((12, 12))
    params = QuickshiftParams(kernel_size=1.5, max_dist=4.0, color_multiplier=3.0, min_size=1)
    seg = quickshift(img, params)
    oracle = brute_quickshift(img, 1.5, 4.0, 3.0)
    assert np.array_equal(seg.labels, oracle)


def test_constant_image_tiny_max_dist_is_all_singletons():
    seg = quickshift(np.full((10, 10), 0.5), QuickshiftParams(max_dist=0.5, min_size=1))
    assert seg.n_segments == 100
    merged = quickshift(np.full((10, 10), 0.5), QuickshiftParams(max_dist=0.5, min_size=4))
    assert merged.sizes().min() >= 4


def test_rejects_non_finite_and_bad_shape():
    img = np.zeros((8, 8))
    img[2, 2] = np.nan
    with pytest.raises(ValueError):
        quickshift(img)
    with pytest.raises(ValueError):
        quickshift(np.zeros((4, 4, 3)))
    with pytest.raises(ValueError):
        QuickshiftParams(kernel_size=0)
    with pytest.raises(ValueError):
        QuickshiftParams(max_dist=-1)
    with pytest.raises(ValueError):
        QuickshiftParams(min_size=0)


def test_density_of_constant_image_peaks_in_centre():
    d = parzen_density(np.zeros((20, 20)), QuickshiftParams())
    np.testing.assert_allclose(d, d[::-1, ::-1])
    assert d[0, 0] < d[0, 10] < d[10, 10]


def test_canonical_labels_first_pixel_order():
    lab = np.array([[5, 5, 2], [7, 2, 2]])
    assert canonical_labels(lab).tolist() == [[0, 0, 1], [2, 1, 1]]


def test_split_disconnected():
    lab = np.array([[0, 1, 0], [0, 1, 0]])
    assert split_disconnected(lab).tolist() == [[0, 1, 2], [0, 1, 2]]


def test_absorb_small_uses_longest_border():
    lab = np.array(
        [
            [0, 0, 1, 1, 1],
            [0, 0, 2, 1, 1],
            [0, 0, 2, 1, 1],
            [0, 0, 2, 1, 1],
        ]
    )
    # segment 2 shares three edges with 0 and four with 1
    assert absorb_small(lab, 4).tolist() == [
        [0, 0, 1, 1, 1],
        [0, 0, 1, 1, 1],
        [0, 0, 1, 1, 1],
        [0, 0, 1, 1, 1],
    ]
    tie = np.array([[0, 0, 1, 2, 2]])
    assert absorb_small(tie, 2).tolist() == [[0, 0, 0, 1, 1]]
    assert absorb_small(lab, 1) is lab


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), cm=st.floats(0.5, 200.0), min_size=st.integers(1, 12))
def test_partition_and_connectivity(seed, cm, min_size):
    img = np.random.default_rng(seed).random((24, 24))
    seg = quickshift(img, QuickshiftParams(color_multiplier=cm, min_size=min_size))
    check_partition(seg, img.shape)
    if seg.n_segments > 1:
        assert seg.sizes().min() >= min_size
    for k in range(seg.n_segments):
        assert is_four_connected(seg.labels == k)
    again = quickshift(img.copy(), QuickshiftParams(color_multiplier=cm, min_size=min_size))
    assert np.array_equal(seg.labels, again.labels)


def test_golden_image_segmentation(manifest, bank):
    img = golden_image(manifest, bank)
    seg = quickshift(img)
    check_partition(seg, (224, 224))
    assert 150 <= seg.n_segments <= 300
    assert seg.sizes().min() >= 8
    fragmented = quickshift(img, QuickshiftParams(color_multiplier=1000.0))
    assert fragmented.n_segments >= seg.n_segments
