"""Synthetic device signals and window sampling.

Every device is a sum of (optionally drifting) tones, harmonic stacks, a
small 60 Hz residue and white Gaussian noise.  The tone list of each device
is the ground truth that explanation quality is later scored against.

All randomness goes through :class:`numpy.random.Generator` backed by
PCG64.  Streams are derived with :class:`numpy.random.SeedSequence`, so a
``(seed, class_id)`` pair always reproduces the same signal.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Literal

import numpy as np

Split = Literal["train", "validation"]

DEFAULT_SAMPLE_RATE = 2_000_000.0
DEFAULT_WINDOW = 200_000
MAINS_HZ = 60.0


@dataclass(frozen=True)
class Tone:
    center_freq: float
    amplitude: float
    drift: float = 0.0  # Hz/s


@dataclass(frozen=True)
class Harmonics:
    fundamental: float
    count: int
    rolloff: float
    amplitude: float = 1.0

    def frequencies(self) -> np.ndarray:
        return self.fundamental * np.arange(1, self.count + 1)

    def amplitudes(self) -> np.ndarray:
        return self.amplitude * self.rolloff ** np.arange(self.count)


@dataclass(frozen=True)
class DeviceSpec:
    class_id: int
    name: str = ""
    tones: tuple[Tone, ...] = ()
    harmonics: tuple[Harmonics, ...] = ()
    noise_floor_sigma: float = 1.0
    mains_residue_amp: float = 0.0
    n_samples: int = 2_000_000  # W_D(c)

    def frequencies(self) -> np.ndarray:
        """All injected frequencies (tones first, then harmonics)."""
        parts = [np.array([t.center_freq for t in self.tones], dtype=float)]
        parts += [h.frequencies() for h in self.harmonics]
        return np.concatenate(parts) if parts else np.zeros(0)

    def tone_frequencies(self) -> np.ndarray:
        return np.array([t.center_freq for t in self.tones], dtype=float)

    def validate(self, sample_rate: float) -> None:
        nyquist = sample_rate / 2
        for f in self.frequencies():
            if not 0 < f < nyquist:
                raise ValueError(
                    f"class {self.class_id}: frequency {f} Hz outside (0, {nyquist})"
                )
        amps = [t.amplitude for t in self.tones] + [h.amplitude for h in self.harmonics]
        if any(a < 0 for a in amps) or self.noise_floor_sigma < 0 or self.mains_residue_amp < 0:
            raise ValueError(f"class {self.class_id}: negative amplitude")
        for h in self.harmonics:
            if h.count < 1:
                raise ValueError(f"class {self.class_id}: harmonic count must be >= 1")
        if self.n_samples <= 0:
            raise ValueError(f"class {self.class_id}: n_samples must be positive")


@dataclass(frozen=True)
class DatasetManifest:
    classes: tuple[DeviceSpec, ...]
    sample_rate: float = DEFAULT_SAMPLE_RATE
    f_train: float = 0.8
    seed: int = 0
    background_class: int | None = None

    def __post_init__(self):
        self.validate()

    def validate(self, window_length: int | None = None) -> None:
        if not 0 < self.f_train < 1:
            raise ValueError(f"f_train must lie in (0, 1), got {self.f_train}")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not self.classes:
            raise ValueError("manifest has no classes")
        ids = [c.class_id for c in self.classes]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate class ids: {ids}")
        for c in self.classes:
            c.validate(self.sample_rate)
            if window_length is not None and c.n_samples < 2 * window_length + 2:
                raise ValueError(
                    f"class {c.class_id}: n_samples={c.n_samples} < 2*{window_length}+2"
                )

    @property
    def class_ids(self) -> list[int]:
        return [c.class_id for c in self.classes]

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def spec(self, class_id: int) -> DeviceSpec:
        for c in self.classes:
            if c.class_id == class_id:
                return c
        raise KeyError(class_id)

    def class_seed(self, class_id: int) -> int:
        """Per-class synthesis seed derived from the manifest seed."""
        ss = np.random.SeedSequence([int(self.seed), int(class_id)])
        return int(ss.generate_state(1, dtype=np.uint64)[0])

    def with_seed(self, seed: int) -> "DatasetManifest":
        return DatasetManifest(
            classes=self.classes,
            sample_rate=self.sample_rate,
            f_train=self.f_train,
            seed=seed,
            background_class=self.background_class,
        )

    # JSON -----------------------------------------------------------------
    def to_dict(self) -> dict:
        classes = []
        for c in self.classes:
            d = asdict(c)
            d["tones"] = [asdict(t) for t in c.tones]
            d["harmonics"] = [asdict(h) for h in c.harmonics]
            classes.append(d)
        return {
            "sample_rate": self.sample_rate,
            "f_train": self.f_train,
            "seed": self.seed,
            "background_class": self.background_class,
            "classes": classes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        classes = []
        for c in d["classes"]:
            classes.append(
                DeviceSpec(
                    class_id=int(c["class_id"]),
                    name=c.get("name", ""),
                    tones=tuple(Tone(**t) for t in c.get("tones", [])),
                    harmonics=tuple(Harmonics(**h) for h in c.get("harmonics", [])),
                    noise_floor_sigma=float(c.get("noise_floor_sigma", 1.0)),
                    mains_residue_amp=float(c.get("mains_residue_amp", 0.0)),
                    n_samples=int(c.get("n_samples", 2_000_000)),
                )
            )
        return cls(
            classes=tuple(classes),
            sample_rate=float(d.get("sample_rate", DEFAULT_SAMPLE_RATE)),
            f_train=float(d.get("f_train", 0.8)),
            seed=int(d.get("seed", 0)),
            background_class=d.get("background_class"),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "DatasetManifest":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class WindowSample:
    class_id: int
    start: int
    length: int
    split: Split

    @property
    def stop(self) -> int:
        return self.start + self.length


# Roster tones (Hz, amplitude, drift Hz/s).  Pairs are nested with their
# single-tone parts ({a}, {b}, {a, b}), so every tone of a device is needed to
# tell it apart from some other class, including the tone-free background.
_ROSTER = (
    ((62_000.0, 0.55, 0.0),),
    ((229_000.0, 0.5, 500.0),),
    ((62_000.0, 0.55, 0.0), (229_000.0, 0.5, 500.0)),
    ((412_000.0, 0.6, 0.0),),
    ((611_000.0, 0.45, 0.0),),
    ((412_000.0, 0.6, 0.0), (611_000.0, 0.45, 0.0)),
    ((141_000.0, 0.5, 250.0),),
    ((507_000.0, 0.5, 0.0),),
)


def default_manifest(seed: int = 0, n_samples: int = 2_000_000) -> DatasetManifest:
    """Desk-scale roster: 8 synthetic devices plus a background class (id 8)."""
    devices = [
        DeviceSpec(
            class_id=i,
            name=f"device_{i}",
            tones=tuple(Tone(f, a, d) for f, a, d in tones),
            noise_floor_sigma=1.0,
            mains_residue_amp=0.2,
            n_samples=n_samples,
        )
        for i, tones in enumerate(_ROSTER)
    ]
    n = len(devices)
    devices.append(
        DeviceSpec(
            class_id=n,
            name="background",
            noise_floor_sigma=1.0,
            mains_residue_amp=0.2,
            n_samples=n_samples,
        )
    )
    return DatasetManifest(classes=tuple(devices), seed=seed, background_class=n)


def synthesize_signal(
    spec: DeviceSpec, n_samples: int, sample_rate: float, seed: int
) -> np.ndarray:
    """Render a device signal.

    Tone phases are drawn from the seeded generator, so windows are never
    phase-locked to any component.  The result is float64; identical
    arguments give bit-identical output.
    """
    if n_samples <= 0:
        raise ValueError(f"n_samples must be positive, got {n_samples}")
    spec.validate(sample_rate)
    rng = np.random.Generator(np.random.PCG64(seed))
    t = np.arange(n_samples) / sample_rate
    x = np.zeros(n_samples)
    for tone in spec.tones:
        phi = rng.uniform(0, 2 * np.pi)
        x += tone.amplitude * np.sin(
            2 * np.pi * (tone.center_freq * t + 0.5 * tone.drift * t * t) + phi
        )
    for h in spec.harmonics:
        for f, a in zip(h.frequencies(), h.amplitudes()):
            phi = rng.uniform(0, 2 * np.pi)
            x += a * np.sin(2 * np.pi * f * t + phi)
    phi = rng.uniform(0, 2 * np.pi)
    if spec.mains_residue_amp > 0:
        x += spec.mains_residue_amp * np.sin(2 * np.pi * MAINS_HZ * t + phi)
    if spec.noise_floor_sigma > 0:
        x += rng.normal(0.0, spec.noise_floor_sigma, n_samples)
    return x


def split_bounds(n_samples: int, window_length: int, f_train: float, split: Split) -> tuple[int, int]:
    """Inclusive start-index interval for ``split``.

    Train starts lie in ``[0, (W_D - 2 W) f - 1]``; validation starts in
    ``[(W_D - 2 W) f - 1 + W, W_D - 1 - W]``.  The train upper bound is
    floored so the two ranges of raw samples can never overlap.
    """
    train_hi = int(np.floor((n_samples - 2 * window_length) * f_train - 1))
    if split == "train":
        return 0, train_hi
    if split == "validation":
        return train_hi + window_length, n_samples - 1 - window_length
    raise ValueError(f"unknown split {split!r}")


def sample_window(
    manifest: DatasetManifest,
    window_length: int,
    split: Split,
    rng: np.random.Generator,
    class_id: int | None = None,
) -> WindowSample:
    """Draw one window: class uniformly from the roster, start uniformly from its split.

    Pass ``class_id`` to skip the class draw (used for per-class explanation
    batches).
    """
    if class_id is None:
        class_id = manifest.class_ids[int(rng.integers(manifest.n_classes))]
    spec = manifest.spec(class_id)
    lo, hi = split_bounds(spec.n_samples, window_length, manifest.f_train, split)
    if hi < lo or lo < 0:
        raise ValueError(
            f"empty {split} interval [{lo}, {hi}] for class {class_id} "
            f"(n_samples={spec.n_samples}, window={window_length})"
        )
    start = int(rng.integers(lo, hi + 1))
    return WindowSample(class_id=class_id, start=start, length=window_length, split=split)


def extract_window(signal: np.ndarray, sample: WindowSample) -> np.ndarray:
    if sample.start < 0 or sample.stop > len(signal):
        raise IndexError(
            f"window [{sample.start}, {sample.stop}) outside signal of length {len(signal)}"
        )
    return signal[sample.start : sample.stop]


@dataclass
class SignalBank:
    """Rendered raw signals for every class of a manifest, kept in memory."""

    manifest: DatasetManifest
    signals: dict[int, np.ndarray] = field(default_factory=dict)

    @classmethod
    def render(cls, manifest: DatasetManifest, dtype=np.float32) -> "SignalBank":
        bank = cls(manifest)
        for spec in manifest.classes:
            x = synthesize_signal(
                spec, spec.n_samples, manifest.sample_rate, manifest.class_seed(spec.class_id)
            )
            bank.signals[spec.class_id] = x.astype(dtype)
        return bank

    def window(self, sample: WindowSample) -> np.ndarray:
        return extract_window(self.signals[sample.class_id], sample)
