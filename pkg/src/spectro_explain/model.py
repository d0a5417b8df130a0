"""Reference spectrogram classifier, training loop and evaluation.

The explainer only needs :class:`Classifier`: something with ``n_classes``
and ``predict_proba(batch) -> probabilities``.  :class:`TorchClassifier`
wraps the small reference CNN trained here; any other model (for instance
an externally trained 224x224x3 network) can be adapted the same way.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .spectro import GRID, StftParams, classifier_input
from .synthgen import SignalBank, sample_window

log = logging.getLogger(__name__)


@runtime_checkable
class Classifier(Protocol):
    n_classes: int

    def predict_proba(self, images: np.ndarray) -> np.ndarray: ...


class ReferenceCNN(nn.Module):
    """Three stride-2 conv blocks over a 4x4 average-pooled, standardized input.

    Features are averaged over the time axis only, so the linear head still
    sees where along the frequency axis each feature fired.  The single
    spectrogram plane is replicated to ``in_planes`` input channels.
    """

    def __init__(self, n_classes: int, widths=(32, 64, 128), in_planes: int = 3, pool: int = 4):
        super().__init__()
        self.n_classes = n_classes
        self.widths = tuple(widths)
        self.in_planes = in_planes
        self.pool = pool
        convs = []
        c = in_planes
        for w in widths:
            convs.append(nn.Conv2d(c, w, kernel_size=3, stride=2, padding=1))
            c = w
        self.convs = nn.ModuleList(convs)
        rows = GRID // pool
        for _ in widths:
            rows = (rows + 1) // 2
        self.head = nn.Linear(c * rows, n_classes)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: (N, 1, 224, 224); pooling commutes with plane replication, so pool first
        x = F.avg_pool2d(x, self.pool)
        mu = x.mean(dim=(2, 3), keepdim=True)
        sd = x.std(dim=(2, 3), keepdim=True)
        x = (x - mu) / (sd + 1e-6)
        x = x.expand(-1, self.in_planes, -1, -1)
        for conv in self.convs:
            x = F.relu(conv(x))
        x = x.mean(dim=3)
        return self.head(x.flatten(1))

    def architecture(self) -> dict:
        return {
            "name": "ReferenceCNN",
            "n_classes": self.n_classes,
            "widths": list(self.widths),
            "in_planes": self.in_planes,
            "pool": self.pool,
            "grid": GRID,
        }

    def architecture_hash(self) -> bytes:
        return hashlib.sha256(json.dumps(self.architecture(), sort_keys=True).encode()).digest()


def init_weights(model: nn.Module, seed: int) -> None:
    """Kaiming-normal conv/linear weights, zero biases, from a private generator."""
    g = torch.Generator().manual_seed(int(seed) % (2**63))
    with torch.no_grad():
        for name, p in model.named_parameters():
            if name.endswith("bias"):
                p.zero_()
            else:
                fan_in = p[0].numel()
                p.copy_(torch.randn(p.shape, generator=g) * np.sqrt(2.0 / fan_in))


def _as_batch(images) -> torch.Tensor:
    x = np.asarray(images, dtype=np.float32)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[1:] != (GRID, GRID):
        raise ValueError(f"expected (N, {GRID}, {GRID}) spectrograms, got {x.shape}")
    return torch.from_numpy(np.ascontiguousarray(x)).unsqueeze(1)


class TorchClassifier:
    """Inference wrapper; the wrapped network is never mutated."""

    def __init__(self, net: ReferenceCNN, chunk: int = 250):
        self.net = net.eval()
        self.n_classes = net.n_classes
        self.chunk = chunk

    def logits(self, images) -> np.ndarray:
        x = _as_batch(images)
        out = []
        with torch.no_grad():
            for i in range(0, len(x), self.chunk):
                out.append(self.net(x[i : i + self.chunk]))
        return torch.cat(out).numpy().astype(np.float64)

    def predict_proba(self, images) -> np.ndarray:
        z = self.logits(images)
        z -= z.max(axis=1, keepdims=True)
        p = np.exp(z)
        return p / p.sum(axis=1, keepdims=True)

    def predict(self, images) -> np.ndarray:
        return self.logits(images).argmax(axis=1)


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 0.02
    momentum: float = 0.9
    seed: int = 0
    train_set_size: int = 320  # fresh windows per epoch
    val_set_size: int = 180

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.train_set_size < 1 or self.val_set_size < 1:
            raise ValueError("batch and set sizes must be >= 1")


@dataclass
class EvalReport:
    confusion: np.ndarray
    train_accuracy: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    degenerate: bool = False

    @property
    def final_val_accuracy(self) -> float:
        return accuracy(self.confusion)

    def to_dict(self) -> dict:
        return {
            "train_accuracy": list(map(float, self.train_accuracy)),
            "val_accuracy": list(map(float, self.val_accuracy)),
            "train_loss": list(map(float, self.train_loss)),
            "confusion": self.confusion.astype(int).tolist(),
            "final_val_accuracy": self.final_val_accuracy,
            "degenerate": self.degenerate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(
            confusion=np.array(d["confusion"], dtype=np.int64),
            train_accuracy=d.get("train_accuracy", []),
            val_accuracy=d.get("val_accuracy", []),
            train_loss=d.get("train_loss", []),
            degenerate=d.get("degenerate", False),
        )


class TrainingDiverged(RuntimeError):
    pass


def accuracy(confusion: np.ndarray) -> float:
    n = confusion.sum()
    return float(np.trace(confusion) / n) if n else 0.0


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return cm


def evaluate(classifier: Classifier, images, labels, batch: int = 250) -> EvalReport:
    """Confusion matrix (rows = truth) of ``classifier`` on a labeled set."""
    labels = np.asarray(labels)
    if len(labels) < classifier.n_classes:
        raise ValueError("need at least one evaluation item per class")
    preds = []
    for i in range(0, len(labels), batch):
        preds.append(classifier.predict_proba(images[i : i + batch]).argmax(axis=1))
    cm = confusion_matrix(labels, np.concatenate(preds), classifier.n_classes)
    return EvalReport(confusion=cm, val_accuracy=[accuracy(cm)])


def draw_batch(
    bank: SignalBank,
    n: int,
    split: str,
    rng: np.random.Generator,
    stft_params: StftParams = StftParams(),
    window_length: int = 200_000,
    class_id: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """``n`` spectrograms sampled per the windowing rules, with their labels."""
    images = np.empty((n, GRID, GRID), dtype=np.float32)
    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        s = sample_window(bank.manifest, window_length, split, rng, class_id=class_id)
        images[i] = classifier_input(bank.window(s), stft_params)
        labels[i] = s.class_id
    return images, labels


def _label_index(bank: SignalBank) -> dict[int, int]:
    ids = bank.manifest.class_ids
    if sorted(ids) != list(range(len(ids))):
        raise ValueError(f"class ids must be 0..{len(ids) - 1}, got {ids}")
    return {c: c for c in ids}


def train(
    bank: SignalBank,
    config: TrainConfig = TrainConfig(),
    stft_params: StftParams = StftParams(),
    window_length: int = 200_000,
    widths=(32, 64, 128),
) -> tuple[TorchClassifier, EvalReport]:
    """Train the reference CNN on windows drawn online from ``bank``.

    Initialization, window draws and batch order all derive from
    ``config.seed``; the validation set is drawn once up front from the
    validation interval.
    """
    _label_index(bank)
    n_classes = bank.manifest.n_classes
    ss = np.random.SeedSequence([int(config.seed), 0x5EED])
    data_seed, val_seed, init_seed = ss.generate_state(3, dtype=np.uint64)
    data_rng = np.random.default_rng(int(data_seed))
    val_rng = np.random.default_rng(int(val_seed))

    net = ReferenceCNN(n_classes, widths=widths)
    init_weights(net, int(init_seed))
    opt = torch.optim.SGD(net.parameters(), lr=config.learning_rate, momentum=config.momentum)

    val_x, val_y = draw_batch(bank, config.val_set_size, "validation", val_rng, stft_params, window_length)
    report = EvalReport(confusion=np.zeros((n_classes, n_classes), dtype=np.int64))
    report.degenerate = n_classes == 1

    for epoch in range(config.epochs):
        net.train()
        correct = seen = 0
        losses = []
        remaining = config.train_set_size
        while remaining > 0:
            b = min(config.batch_size, remaining)
            remaining -= b
            x, y = draw_batch(bank, b, "train", data_rng, stft_params, window_length)
            logits = net(torch.from_numpy(x).unsqueeze(1))
            loss = F.cross_entropy(logits, torch.from_numpy(y))
            if not torch.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss {loss.item()} at epoch {epoch}, "
                    f"lr={config.learning_rate}, seed={config.seed}"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(loss.item())
            correct += int((logits.argmax(1).numpy() == y).sum())
            seen += b
        clf = TorchClassifier(net)
        ev = evaluate(clf, val_x, val_y)
        report.train_accuracy.append(correct / seen)
        report.train_loss.append(float(np.mean(losses)))
        report.val_accuracy.append(ev.final_val_accuracy)
        report.confusion = ev.confusion
        log.info(
            "seed %s epoch %d loss %.4f train %.3f val %.3f",
            config.seed, epoch, report.train_loss[-1], report.train_accuracy[-1], report.val_accuracy[-1],
        )
    return TorchClassifier(net.eval()), report


def loss_fn(net: nn.Module, x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    return F.cross_entropy(net(x), y)


def gradient_check(
    net: ReferenceCNN, x: np.ndarray, y: np.ndarray, n_params: int = 10, seed: int = 0, h: float = 1e-6
) -> np.ndarray:
    """Relative error between autograd and central differences on sampled parameters.

    Runs on a float64 copy of ``net``.  Returns one relative error per
    sampled scalar parameter, ``|a - n| / max(|a|, |n|, 1e-12)``.
    """
    import copy

    net64 = copy.deepcopy(net).double()
    xt = torch.from_numpy(np.asarray(x, dtype=np.float64)).unsqueeze(1)
    yt = torch.from_numpy(np.asarray(y, dtype=np.int64))
    params = list(net64.parameters())
    sizes = np.array([p.numel() for p in params])
    rng = np.random.default_rng(seed)
    flat_idx = rng.choice(sizes.sum(), size=n_params, replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    net64.zero_grad()
    loss_fn(net64, xt, yt).backward()
    errs = []
    with torch.no_grad():
        for k in flat_idx:
            pi = int(np.searchsorted(offsets, k, side="right") - 1)
            j = int(k - offsets[pi])
            p = params[pi].view(-1)
            analytic = params[pi].grad.view(-1)[j].item()
            orig = p[j].item()
            p[j] = orig + h
            up = loss_fn(net64, xt, yt).item()
            p[j] = orig - h
            down = loss_fn(net64, xt, yt).item()
            p[j] = orig
            numeric = (up - down) / (2 * h)
            errs.append(abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-12))
    return np.array(errs)


def state_bytes(net: nn.Module) -> bytes:
    """Concatenated little-endian float32 parameter dump, in ``state_dict`` order."""
    return b"".join(
        t.detach().cpu().numpy().astype("<f4").tobytes() for t in net.state_dict().values()
    )


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
