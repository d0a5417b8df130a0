"""End-to-end orchestration shared by the command line and the demos.

Explaining the same spectrograms under several models (the ensemble case)
reuses each spectrogram's segmentation, masks and perturbed variants, so
only the classifier queries scale with the number of models.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .aggregate import AggregatedExplanation, aggregate, derivative_profile, project
from .limexp import Explanation, LimeParams, fill_image, fit, perturb_batch, sample_masks
from .model import Classifier, TrainConfig
from .quickseg import QuickshiftParams, quickshift
from .spectro import FrequencyProfile, StftParams, classifier_input, power_frames
from .synthgen import DEFAULT_WINDOW, DatasetManifest, SignalBank, default_manifest, sample_window

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


def _from_dict(cls, d: dict | None):
    if not d:
        return cls()
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**d)


@dataclass
class PipelineConfig:
    manifest: str | None = None  # path; None means the built-in roster
    out: str = "run"
    seed: int = 0
    window_length: int = DEFAULT_WINDOW
    stft: StftParams = field(default_factory=StftParams)
    quickshift: QuickshiftParams = field(default_factory=QuickshiftParams)
    lime: LimeParams = field(default_factory=LimeParams)
    train: TrainConfig = field(default_factory=TrainConfig)
    n_explanations: int = 400
    n_retrainings: int = 16
    classes: list[int] | None = None  # classes to explain; None = every non-background class
    retrain_seeds: list[int] | None = None  # explicit ensemble seeds; default seed, seed+1, ...

    def __post_init__(self):
        if self.n_explanations < 1 or self.n_retrainings < 1:
            raise ConfigError("n_explanations and n_retrainings must be >= 1")

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "PipelineConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            for key, sub in (("stft", StftParams), ("quickshift", QuickshiftParams), ("lime", LimeParams), ("train", TrainConfig)):
                d[key] = _from_dict(sub, d.get(key))
            cfg = cls(**d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if cfg.manifest and base_dir is not None and not Path(cfg.manifest).is_absolute():
            cfg.manifest = str(base_dir / cfg.manifest)
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            d = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(d, base_dir=path.parent)

    def to_dict(self) -> dict:
        return asdict(self)

    def load_manifest(self) -> DatasetManifest:
        if self.manifest is None:
            m = default_manifest(seed=self.seed)
        else:
            p = Path(self.manifest)
            if not p.exists():
                raise ConfigError(f"manifest not found: {p}")
            try:
                m = DatasetManifest.load(p)
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"invalid manifest {p}: {exc}") from exc
        try:
            m.validate(self.window_length)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return m

    def ensemble_seeds(self, seed: int) -> list[int]:
        if self.retrain_seeds is not None:
            return [int(s) for s in self.retrain_seeds]
        return [seed + r for r in range(self.n_retrainings)]

    def explained_classes(self, manifest: DatasetManifest) -> list[int]:
        if self.classes is not None:
            return list(self.classes)
        return [c for c in manifest.class_ids if c != manifest.background_class]


def explanation_rng(seed: int, class_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(class_id), 0xE1]))


@dataclass
class ClassExplanations:
    """Explanations of one class under one or more models, plus shared inputs."""

    class_id: int
    per_model: list[list[Explanation]]
    n_segments: list[int]
    welch: FrequencyProfile

    def aggregate(self, model: int = 0) -> AggregatedExplanation:
        return aggregate(self.per_model[model])

    def derivative(self, model: int = 0) -> FrequencyProfile:
        return derivative_profile(project(self.aggregate(model)))


def explain_class(
    classifiers: Sequence[Classifier],
    bank: SignalBank,
    class_id: int,
    n_explanations: int,
    *,
    stft_params: StftParams = StftParams(),
    qs_params: QuickshiftParams = QuickshiftParams(),
    lime_params: LimeParams = LimeParams(),
    seed: int = 0,
    window_length: int = DEFAULT_WINDOW,
    on_item=None,
) -> ClassExplanations:
    """Explain ``n_explanations`` validation spectrograms of ``class_id``.

    Every classifier sees exactly the same spectrograms, superpixels and
    perturbation masks.  ``on_item(i, image, segmap, explanations)`` is
    called after each spectrogram, with one explanation per classifier.
    """
    rng = explanation_rng(seed, class_id)
    per_model: list[list[Explanation]] = [[] for _ in classifiers]
    n_segments = []
    welch_sum = np.zeros(stft_params.n_bins)
    for i in range(n_explanations):
        s = sample_window(bank.manifest, window_length, "validation", rng, class_id=class_id)
        window = bank.window(s)
        welch_sum += power_frames(window, stft_params).mean(axis=1)
        image = classifier_input(window, stft_params)
        segmap = quickshift(image, qs_params)
        n_segments.append(segmap.n_segments)
        bits = sample_masks(lime_params.n_samples, segmap.n_segments, rng)
        fill = fill_image(image, segmap)
        probs = np.empty((len(classifiers), len(bits)))
        for lo in range(0, len(bits), lime_params.batch):
            variants = perturb_batch(image, segmap, bits[lo : lo + lime_params.batch], fill)
            for k, clf in enumerate(classifiers):
                probs[k, lo : lo + len(variants)] = clf.predict_proba(variants)[:, class_id]
        exps = [fit(bits, probs[k], segmap, class_id, lime_params) for k in range(len(classifiers))]
        for k, e in enumerate(exps):
            per_model[k].append(e)
        if on_item is not None:
            on_item(i, image, segmap, exps)
    welch = FrequencyProfile(
        values=welch_sum / n_explanations, kind="welch", freqs=stft_params.bin_freqs(bank.manifest.sample_rate)
    )
    return ClassExplanations(class_id=class_id, per_model=per_model, n_segments=n_segments, welch=welch)


def tone_bins(manifest: DatasetManifest, class_id: int, stft_params: StftParams = StftParams()) -> np.ndarray:
    """Ground-truth tone frequencies of a class mapped to spectrogram rows."""
    return stft_params.freq_to_bin(manifest.spec(class_id).tone_frequencies(), manifest.sample_rate)


def golden_image(manifest: DatasetManifest, bank: SignalBank, class_id: int = 0, stft_params: StftParams = StftParams(), window_length: int = DEFAULT_WINDOW) -> np.ndarray:
    """The first validation spectrogram of ``class_id`` under a fixed seed (calibration image)."""
    rng = np.random.default_rng(np.random.SeedSequence([manifest.seed, class_id, 0x601D]))
    s = sample_window(manifest, window_length, "validation", rng, class_id=class_id)
    return classifier_input(bank.window(s), stft_params)
