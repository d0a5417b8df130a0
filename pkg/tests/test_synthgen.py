import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chisquare

from spectro_explain.synthgen import (
    DatasetManifest,
    DeviceSpec,
    Harmonics,
    Tone,
    WindowSample,
    default_manifest,
    extract_window,
    sample_window,
    split_bounds,
    synthesize_signal,
)

FS = 2_000_000.0


def direct_dft(x, k):
    n = np.arange(len(x))
    return np.abs(np.sum(x * np.exp(-2j * np.pi * k * n / len(x))))


def test_silent_spec_is_all_zero():
    spec = DeviceSpec(class_id=0, noise_floor_sigma=0.0, mains_residue_amp=0.0)
    x = synthesize_signal(spec, 1000, FS, seed=3)
    assert np.array_equal(x, np.zeros(1000))


def test_single_tone_peaks_at_nearest_bin():
    spec = DeviceSpec(class_id=0, tones=(Tone(100_000.0, 1.0),), noise_floor_sigma=0.0)
    n = 200_000
    x = synthesize_signal(spec, n, FS, seed=1)
    k0 = round(100_000 * n / FS)  # 10000
    # direct DFT oracle over the neighbourhood of the tone and a random bin sample
    rng = np.random.default_rng(0)
    others = np.concatenate([np.arange(k0 - 5, k0 + 6), rng.integers(1, n // 2, 200)])
    mags = {int(k): direct_dft(x, k) for k in others}
    assert max(mags, key=mags.get) == k0
    assert np.argmax(np.abs(np.fft.rfft(x))) == k0
    assert mags[k0] == pytest.approx(n / 2, rel=1e-6)


def test_deterministic_given_seed():
    spec = default_manifest().spec(2)
    a = synthesize_signal(spec, 5000, FS, seed=7)
    b = synthesize_signal(spec, 5000, FS, seed=7)
    c = synthesize_signal(spec, 5000, FS, seed=8)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, c)


def test_rejects_bad_inputs():
    with pytest.raises(ValueError):
        synthesize_signal(DeviceSpec(0, tones=(Tone(FS / 2, 1.0),)), 100, FS, 0)
    with pytest.raises(ValueError):
        synthesize_signal(DeviceSpec(0, harmonics=(Harmonics(300_000.0, 4, 0.5),)), 100, FS, 0)
    with pytest.raises(ValueError):
        synthesize_signal(DeviceSpec(0), 0, FS, 0)
    with pytest.raises(ValueError):
        synthesize_signal(DeviceSpec(0, tones=(Tone(1e5, -1.0),)), 100, FS, 0)


def test_harmonic_stack_amplitudes():
    h = Harmonics(fundamental=50_000.0, count=3, rolloff=0.5, amplitude=2.0)
    spec = DeviceSpec(0, harmonics=(h,), noise_floor_sigma=0.0)
    n = 20_000
    x = synthesize_signal(spec, n, FS, seed=0)
    spectrum = np.abs(np.fft.rfft(x)) * 2 / n
    bins = (h.frequencies() * n / FS).astype(int)
    np.testing.assert_allclose(spectrum[bins], [2.0, 1.0, 0.5], rtol=1e-6)


def test_drift_moves_the_tone():
    spec = DeviceSpec(0, tones=(Tone(100_000.0, 1.0, drift=2e6),), noise_floor_sigma=0.0)
    x = synthesize_signal(spec, 400_000, FS, seed=0)
    seg = 20_000
    first = np.argmax(np.abs(np.fft.rfft(x[:seg]))) * FS / seg
    last = np.argmax(np.abs(np.fft.rfft(x[-seg:]))) * FS / seg
    # 2 MHz/s over ~0.19 s between segment centres
    assert last - first == pytest.approx(2e6 * 0.19, rel=0.05)


def test_split_bounds_desk_scale():
    # (2e6 - 4e5) * 0.8 - 1 = 1,279,999 ; validation from 1,279,999 + 2e5
    assert split_bounds(2_000_000, 200_000, 0.8, "train") == (0, 1_279_999)
    assert split_bounds(2_000_000, 200_000, 0.8, "validation") == (1_479_999, 1_799_999)


@pytest.mark.parametrize("f", [0.0, 1.0, 1.2, -0.1])
def test_manifest_rejects_f_train_outside_open_interval(f):
    with pytest.raises(ValueError):
        DatasetManifest(classes=(DeviceSpec(0),), f_train=f)


def test_manifest_invariants():
    with pytest.raises(ValueError):
        DatasetManifest(classes=(DeviceSpec(0), DeviceSpec(0)))
    m = DatasetManifest(classes=(DeviceSpec(0, n_samples=1000),))
    with pytest.raises(ValueError):
        m.validate(window_length=500)
    m.validate(window_length=499)


def test_manifest_json_roundtrip(tmp_path):
    m = default_manifest(seed=5)
    spec = DeviceSpec(9, harmonics=(Harmonics(10_000.0, 3, 0.7),), n_samples=4000)
    m = DatasetManifest(classes=m.classes + (spec,), seed=5, background_class=8)
    m.save(tmp_path / "m.json")
    assert DatasetManifest.load(tmp_path / "m.json") == m


def test_sample_window_draws_inside_split(rng):
    m = default_manifest()
    for split, (lo, hi) in [("train", (0, 1_279_999)), ("validation", (1_479_999, 1_799_999))]:
        for _ in range(200):
            s = sample_window(m, 200_000, split, rng)
            assert lo <= s.start <= hi
            assert s.length == 200_000 and s.split == split


def test_sample_window_empty_interval(rng):
    m = DatasetManifest(classes=(DeviceSpec(0, n_samples=1000),), f_train=0.001)
    with pytest.raises(ValueError):
        sample_window(m, 400, "train", rng)


def test_class_draw_is_uniform(rng):
    m = DatasetManifest(classes=tuple(DeviceSpec(i, n_samples=100) for i in range(8)))
    counts = np.zeros(8)
    for _ in range(10_000):
        counts[sample_window(m, 10, "train", rng).class_id] += 1
    assert counts.min() > 0
    assert chisquare(counts).pvalue > 0.001


@settings(max_examples=60, deadline=None)
@given(
    n=st.integers(10, 120),
    w=st.integers(1, 30),
    f=st.floats(0.05, 0.95),
)
def test_train_and_validation_windows_never_overlap(n, w, f):
    if n < 2 * w + 2:
        return
    t_lo, t_hi = split_bounds(n, w, f, "train")
    v_lo, v_hi = split_bounds(n, w, f, "validation")
    if t_hi < t_lo or v_hi < v_lo:
        return
    train_pixels = set()
    for s in range(t_lo, t_hi + 1):
        train_pixels.update(range(s, s + w))
    for s in range(v_lo, v_hi + 1):
        assert s + w <= n
        assert train_pixels.isdisjoint(range(s, s + w))


def test_extract_window():
    x = np.array([1, 2, 3, 4, 5])
    assert extract_window(x, WindowSample(0, 0, 4, "train")).tolist() == [1, 2, 3, 4]
    with pytest.raises(IndexError):
        extract_window(x, WindowSample(0, 2, 4, "train"))
    with pytest.raises(IndexError):
        extract_window(x, WindowSample(0, -1, 2, "train"))


@given(start=st.integers(0, 20), length=st.integers(1, 20))
def test_slice_and_complement_cover_signal(start, length):
    x = np.arange(40)
    w = extract_window(x, WindowSample(0, start, length, "train"))
    rebuilt = np.concatenate([x[:start], w, x[start + length :]])
    assert np.array_equal(rebuilt, x)
