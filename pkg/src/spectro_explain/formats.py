"""Binary and CSV artifact formats.

All integers and floats are little-endian.  Layouts::

    SIG1  magic | u32 version | u64 n | f64 sample_rate | f32[n] samples
    SPC1  magic | u32 version | u32 rows | u32 cols | u32 class_id | u8 log_scaled
          [| u8 kind, version 2 only] | f32[rows*cols] row-major
    SEG1  magic | u32 version | u32 rows | u32 cols | u32 n_segments | u32[rows*cols]
    EXP1  magic | u32 version | u32 target_class | u32 rows | u32 cols | u32 n_coef
          | u8[rows * ceil(cols/8)] bit-packed mask rows | f32[n_coef] coefficients
    MDL1  magic | u32 version | 32-byte sha256 of the architecture | u64 n_values
          | f32[n_values] parameters in state_dict order

EXP1 and MDL1 files carry a ``.json`` sidecar with the remaining metadata.
A class id of ``0xFFFFFFFF`` in SPC1 means "no class".
"""

from __future__ import annotations

import csv
import io
import json
import struct
from pathlib import Path

import numpy as np

from .aggregate import AggregatedExplanation, EnsembleProfile
from .limexp import Explanation
from .quickseg import SuperpixelMap
from .spectro import FrequencyProfile, Spectrogram

NO_CLASS = 0xFFFFFFFF

GRID_KINDS = {
    "spectrogram": 0,
    "aggregate": 1,
    "welch": 2,
    "lime_projection": 3,
    "lime_derivative": 4,
    "ensemble_mean": 5,
    "ensemble_std": 6,
}
_KIND_NAMES = {v: k for k, v in GRID_KINDS.items()}


class FormatError(ValueError):
    pass


def _check_magic(buf: bytes, magic: bytes) -> None:
    if buf[:4] != magic:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {magic!r}")


def sidecar(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


# SIG1 ---------------------------------------------------------------------

def write_signal(path, samples: np.ndarray, sample_rate: float) -> None:
    samples = np.asarray(samples, dtype="<f4")
    header = b"SIG1" + struct.pack("<IQd", 1, samples.size, float(sample_rate))
    Path(path).write_bytes(header + samples.tobytes())


def read_signal(path) -> tuple[np.ndarray, float]:
    buf = Path(path).read_bytes()
    _check_magic(buf, b"SIG1")
    version, n, rate = struct.unpack_from("<IQd", buf, 4)
    if version != 1:
        raise FormatError(f"unsupported SIG1 version {version}")
    data = np.frombuffer(buf, dtype="<f4", count=n, offset=24)
    return data.astype(np.float32), rate


# SPC1 ---------------------------------------------------------------------

def write_grid(path, values: np.ndarray, class_id: int = -1, log_scaled: bool = False, kind: str = "spectrogram") -> None:
    values = np.atleast_2d(np.asarray(values, dtype="<f4"))
    rows, cols = values.shape
    cid = NO_CLASS if class_id is None or class_id < 0 else int(class_id)
    if kind == "spectrogram":
        header = b"SPC1" + struct.pack("<IIIIB", 1, rows, cols, cid, int(log_scaled))
    else:
        header = b"SPC1" + struct.pack("<IIIIBB", 2, rows, cols, cid, int(log_scaled), GRID_KINDS[kind])
    Path(path).write_bytes(header + values.tobytes())


def read_grid(path) -> dict:
    buf = Path(path).read_bytes()
    _check_magic(buf, b"SPC1")
    version, rows, cols, cid, log_scaled = struct.unpack_from("<IIIIB", buf, 4)
    offset = 21
    kind = "spectrogram"
    if version == 2:
        kind = _KIND_NAMES[buf[offset]]
        offset += 1
    elif version != 1:
        raise FormatError(f"unsupported SPC1 version {version}")
    values = np.frombuffer(buf, dtype="<f4", count=rows * cols, offset=offset).reshape(rows, cols)
    return {
        "values": values.astype(np.float32),
        "class_id": -1 if cid == NO_CLASS else cid,
        "log_scaled": bool(log_scaled),
        "kind": kind,
    }


def write_spectrogram(path, spec: Spectrogram) -> None:
    write_grid(path, spec.values, spec.class_id, spec.log_scaled)


def write_profile(path, profile: FrequencyProfile, class_id: int = -1) -> None:
    write_grid(path, profile.values[None, :], class_id, False, profile.kind)


def write_aggregate(path, agg: AggregatedExplanation) -> None:
    write_grid(path, agg.E, agg.class_id, False, "aggregate")


# SEG1 ---------------------------------------------------------------------

def write_segmap(path, segmap: SuperpixelMap) -> None:
    rows, cols = segmap.labels.shape
    header = b"SEG1" + struct.pack("<IIII", 1, rows, cols, segmap.n_segments)
    Path(path).write_bytes(header + segmap.labels.astype("<u4").tobytes())


def read_segmap(path) -> SuperpixelMap:
    buf = Path(path).read_bytes()
    _check_magic(buf, b"SEG1")
    version, rows, cols, n = struct.unpack_from("<IIII", buf, 4)
    if version != 1:
        raise FormatError(f"unsupported SEG1 version {version}")
    labels = np.frombuffer(buf, dtype="<u4", count=rows * cols, offset=20).reshape(rows, cols)
    return SuperpixelMap(labels=labels.astype(np.int32), n_segments=n)


# EXP1 ---------------------------------------------------------------------

def write_explanation(path, exp: Explanation) -> None:
    rows, cols = exp.mask.shape
    coef = np.asarray(exp.superpixel_weights, dtype="<f4")
    header = b"EXP1" + struct.pack("<IIIII", 1, exp.target_class, rows, cols, coef.size)
    packed = np.packbits(exp.mask.astype(np.uint8), axis=1)
    Path(path).write_bytes(header + packed.tobytes() + coef.tobytes())
    meta = {
        "target_class": exp.target_class,
        "local_r2": exp.local_r2,
        "intercept": exp.intercept,
        "top_segments": exp.top_segments,
        "too_few_positive": exp.too_few_positive,
        "params": exp.params,
    }
    sidecar(path).write_text(json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8")


def read_explanation(path) -> Explanation:
    buf = Path(path).read_bytes()
    _check_magic(buf, b"EXP1")
    version, target, rows, cols, n_coef = struct.unpack_from("<IIIII", buf, 4)
    if version != 1:
        raise FormatError(f"unsupported EXP1 version {version}")
    row_bytes = (cols + 7) // 8
    offset = 24
    packed = np.frombuffer(buf, dtype=np.uint8, count=rows * row_bytes, offset=offset).reshape(rows, row_bytes)
    mask = np.unpackbits(packed, axis=1, count=cols).astype(bool)
    offset += rows * row_bytes
    coef = np.frombuffer(buf, dtype="<f4", count=n_coef, offset=offset).astype(np.float64)
    meta = {}
    if sidecar(path).exists():
        meta = json.loads(sidecar(path).read_text(encoding="utf-8"))
    return Explanation(
        mask=mask,
        target_class=target,
        superpixel_weights=coef,
        local_r2=meta.get("local_r2", float("nan")),
        top_segments=meta.get("top_segments", []),
        intercept=meta.get("intercept", 0.0),
        too_few_positive=meta.get("too_few_positive", False),
        params=meta.get("params", {}),
    )


# MDL1 ---------------------------------------------------------------------

def write_checkpoint(path, net, extra: dict | None = None) -> None:
    """Dump a :class:`~spectro_explain.model.ReferenceCNN` and its JSON sidecar."""
    from .model import state_bytes

    payload = state_bytes(net)
    n_values = len(payload) // 4
    header = b"MDL1" + struct.pack("<I", 1) + net.architecture_hash() + struct.pack("<Q", n_values)
    Path(path).write_bytes(header + payload)
    meta = {
        "architecture": net.architecture(),
        "tensors": [{"name": k, "shape": list(v.shape)} for k, v in net.state_dict().items()],
    }
    if extra:
        meta.update(extra)
    sidecar(path).write_text(json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8")


def read_checkpoint(path):
    """Rebuild the network; the architecture hash must match the sidecar."""
    import torch

    from .model import ReferenceCNN

    buf = Path(path).read_bytes()
    _check_magic(buf, b"MDL1")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != 1:
        raise FormatError(f"unsupported MDL1 version {version}")
    arch_hash = buf[8:40]
    (n_values,) = struct.unpack_from("<Q", buf, 40)
    meta = json.loads(sidecar(path).read_text(encoding="utf-8"))
    arch = meta["architecture"]
    net = ReferenceCNN(arch["n_classes"], widths=tuple(arch["widths"]), in_planes=arch["in_planes"], pool=arch["pool"])
    if net.architecture_hash() != arch_hash:
        raise FormatError("architecture hash mismatch between checkpoint and sidecar")
    flat = np.frombuffer(buf, dtype="<f4", count=n_values, offset=48)
    state = {}
    pos = 0
    for t in meta["tensors"]:
        size = int(np.prod(t["shape"]))
        state[t["name"]] = torch.from_numpy(flat[pos : pos + size].reshape(t["shape"]).copy())
        pos += size
    if pos != n_values:
        raise FormatError(f"checkpoint holds {n_values} values, sidecar describes {pos}")
    net.load_state_dict(state)
    return net.eval(), meta


# CSV ----------------------------------------------------------------------

def profile_csv(profile: FrequencyProfile, std: FrequencyProfile | None = None, unit_max: bool = False) -> str:
    """``bin,freq_hz,value`` rows (plus ``value_std`` for ensembles).

    With ``unit_max`` both columns are divided by the peak of ``value``.
    """
    values = np.asarray(profile.values, dtype=np.float64)
    sd = None if std is None else np.asarray(std.values, dtype=np.float64)
    scale = values.max() if unit_max and values.max() > 0 else 1.0
    freqs = profile.freqs if profile.freqs is not None else np.full(len(values), np.nan)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bin", "freq_hz", "value"] + ([] if sd is None else ["value_std"]))
    for i, v in enumerate(values):
        row = [i, repr(float(freqs[i])), repr(float(v / scale))]
        if sd is not None:
            row.append(repr(float(sd[i] / scale)))
        w.writerow(row)
    return buf.getvalue()


def write_profile_csv(path, profile: FrequencyProfile, std=None, unit_max: bool = False) -> None:
    Path(path).write_text(profile_csv(profile, std, unit_max), encoding="utf-8")


def write_ensemble_csv(path, ens: EnsembleProfile, unit_max: bool = False) -> None:
    write_profile_csv(path, ens.mean, ens.std, unit_max)


def read_profile_csv(path) -> dict:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out = {
        "bin": np.array([int(r["bin"]) for r in rows]),
        "freq_hz": np.array([float(r["freq_hz"]) for r in rows]),
        "value": np.array([float(r["value"]) for r in rows]),
    }
    if rows and "value_std" in rows[0]:
        out["value_std"] = np.array([float(r["value_std"]) for r in rows])
    return out
