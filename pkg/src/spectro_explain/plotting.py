"""SVG figures.  The CSV/JSON files they are drawn from remain the source of
truth; each SVG names its source files in a leading XML comment."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path, sources: Sequence[str | Path] = ()) -> None:
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    if sources:
        text = path.read_text(encoding="utf-8")
        note = "<!-- data: " + ", ".join(str(s) for s in sources) + " -->\n"
        head, sep, rest = text.partition("?>\n")
        path.write_text(head + sep + note + rest if sep else note + text, encoding="utf-8")


def accuracy_curve(report: dict, path, sources=()) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    epochs = np.arange(1, len(report["train_accuracy"]) + 1)
    ax.plot(epochs, report["train_accuracy"], "o-", label="train")
    ax.plot(epochs, report["val_accuracy"], "s-", label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0, 1.02)
    ax.legend()
    fig.tight_layout()
    _save(fig, path, sources)


def confusion(report: dict, path, sources=()) -> None:
    cm = np.asarray(report["confusion"])
    fig, ax = plt.subplots(figsize=(5, 4.5))
    im = ax.imshow(cm, cmap="viridis")
    for (i, j), v in np.ndenumerate(cm):
        ax.text(j, i, str(v), ha="center", va="center", fontsize=7, color="w" if v < cm.max() / 2 else "k")
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    _save(fig, path, sources)


def grid_map(values: np.ndarray, path, title: str = "", sources=()) -> None:
    fig, ax = plt.subplots(figsize=(5, 4.5))
    im = ax.imshow(values, origin="lower", aspect="auto", cmap="magma")
    ax.set_xlabel("time frame")
    ax.set_ylabel("frequency bin")
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    _save(fig, path, sources)


def welch_overlay(welch: np.ndarray, profile: np.ndarray, path, label: str, std=None, tone_bins=(), sources=()) -> None:
    """Welch spectrum (log scale, right axis) behind an explanation profile."""
    fig, ax = plt.subplots(figsize=(7, 3.5))
    x = np.arange(len(profile))
    ax.plot(x, profile, color="tab:blue", label=label)
    if std is not None:
        ax.fill_between(x, profile - std, profile + std, color="tab:blue", alpha=0.25, lw=0)
    for b in tone_bins:
        ax.axvline(b, color="0.6", ls=":", lw=0.8)
    ax.set_xlabel("frequency bin")
    ax.set_ylabel(label)
    ax2 = ax.twinx()
    ax2.semilogy(np.arange(len(welch)), welch, color="tab:orange", lw=0.8, label="Welch")
    ax2.set_ylabel("Welch power")
    fig.tight_layout()
    _save(fig, path, sources)


def profile_grid(profiles: Sequence[np.ndarray], welch: np.ndarray, path, sources=()) -> None:
    """Small multiples, one panel per retraining."""
    n = len(profiles)
    cols = 4
    rows = int(np.ceil(n / cols))
    fig, axes = plt.subplots(rows, cols, figsize=(12, 2.2 * rows), squeeze=False, sharex=True)
    for k, ax in enumerate(axes.flat):
        if k >= n:
            ax.axis("off")
            continue
        ax.plot(profiles[k], color="tab:blue", lw=0.8)
        ax2 = ax.twinx()
        ax2.semilogy(welch, color="tab:orange", lw=0.6)
        ax2.set_yticks([])
        ax.set_title(f"model {k}", fontsize=8)
    fig.tight_layout()
    _save(fig, path, sources)
