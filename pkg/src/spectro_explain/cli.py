"""Command-line pipeline: ``synth``, ``train``, ``explain``, ``ensemble``, ``report``.

Exit codes: 0 success, 1 internal error, 2 bad input or configuration.  On
failure a one-line JSON object ``{"error", "message", "exit_code"}`` is
written to stderr.

Run layout under ``--out``::

    manifest.json            signals/class_<c>.sig
    train/seed_<s>/          model.mdl(.json) eval_report.json *.svg
    explain/seed_<s>/class_<c>/
                             exp_<i>.exp(.json) aggregate.spc welch.csv
                             projection.csv derivative.csv *.svg
    ensemble/class_<c>/      seed_<s>/derivative.csv ensemble.csv *.svg
    report/                  copies of every figure
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import formats, plotting
from .aggregate import aggregate, derivative_profile, ensemble_stats, project, temporality_score, TEMPORALITY_FLAG
from .model import EvalReport, TorchClassifier, TrainConfig, TrainingDiverged, train
from .pipeline import ConfigError, PipelineConfig, explain_class, tone_bins
from .spectro import FrequencyProfile
from .synthgen import DatasetManifest, SignalBank, synthesize_signal

log = logging.getLogger("spectro_explain")

SEED_ENV = "SPECTRO_EXPLAIN_SEED"


class InputError(Exception):
    """Bad user input; maps to exit code 2."""


class Run:
    def __init__(self, cfg: PipelineConfig, out: Path):
        self.cfg = cfg
        self.out = out

    @property
    def signals(self) -> Path:
        return self.out / "signals"

    def train_dir(self, seed: int) -> Path:
        return self.out / "train" / f"seed_{seed}"

    def explain_dir(self, seed: int, class_id: int) -> Path:
        return self.out / "explain" / f"seed_{seed}" / f"class_{class_id}"

    def ensemble_dir(self, class_id: int) -> Path:
        return self.out / "ensemble" / f"class_{class_id}"

    def manifest(self) -> DatasetManifest:
        # `synth` records the manifest it rendered; later commands reuse it
        recorded = self.out / "manifest.json"
        if self.cfg.manifest is None and recorded.exists():
            try:
                m = DatasetManifest.load(recorded)
                m.validate(self.cfg.window_length)
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"invalid recorded manifest {recorded}: {exc}") from exc
            return m
        return self.cfg.load_manifest()

    def bank(self) -> SignalBank:
        m = self.manifest()
        bank = SignalBank(m)
        for spec in m.classes:
            p = self.signals / f"class_{spec.class_id}.sig"
            if not p.exists():
                raise InputError(f"missing signal file {p}; run `synth` first")
            samples, rate = formats.read_signal(p)
            if rate != m.sample_rate or len(samples) != spec.n_samples:
                raise InputError(f"signal file {p} does not match the manifest")
            bank.signals[spec.class_id] = samples
        return bank


def sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# commands -----------------------------------------------------------------

def cmd_synth(run: Run, seed: int | None) -> dict:
    """Render signals; an explicit run seed replaces the manifest's own seed."""
    m = run.cfg.load_manifest()
    if seed is not None:
        m = m.with_seed(seed)
    run.signals.mkdir(parents=True, exist_ok=True)
    m.save(run.out / "manifest.json")
    sums = {}
    for spec in m.classes:
        x = synthesize_signal(spec, spec.n_samples, m.sample_rate, m.class_seed(spec.class_id))
        p = run.signals / f"class_{spec.class_id}.sig"
        formats.write_signal(p, x, m.sample_rate)
        sums[p.name] = sha256(p)
    return {"signals": sums}


def _train_one(run: Run, bank: SignalBank | None, seed: int) -> Path:
    d = run.train_dir(seed)
    ckpt = d / "model.mdl"
    if ckpt.exists() and (d / "eval_report.json").exists():
        return ckpt
    bank = bank if bank is not None else run.bank()
    cfg = TrainConfig(**{**run.cfg.train.__dict__, "seed": seed})
    d.mkdir(parents=True, exist_ok=True)
    try:
        clf, report = train(bank, cfg, run.cfg.stft, run.cfg.window_length)
    except TrainingDiverged as exc:
        raise TrainingDiverged(f"{exc} (retraining seed {seed})") from exc
    formats.write_checkpoint(ckpt, clf.net, {"train_config": cfg.__dict__})
    rep = report.to_dict()
    (d / "eval_report.json").write_text(json.dumps(rep, indent=2), encoding="utf-8")
    plotting.accuracy_curve(rep, d / "accuracy.svg", ["eval_report.json"])
    plotting.confusion(rep, d / "confusion.svg", ["eval_report.json"])
    return ckpt


def _train_worker(args):
    cfg, out, seed = args
    return str(_train_one(Run(cfg, Path(out)), None, seed))


def cmd_train(run: Run, seed: int) -> dict:
    ckpt = _train_one(run, run.bank(), seed)
    rep = json.loads((ckpt.parent / "eval_report.json").read_text())
    return {"checkpoint": str(ckpt), "final_val_accuracy": rep["final_val_accuracy"]}


def _load_classifier(path: Path) -> TorchClassifier:
    if not path.exists():
        raise InputError(f"checkpoint not found: {path}")
    net, _ = formats.read_checkpoint(path)
    return TorchClassifier(net)


def _write_class_outputs(d: Path, manifest, class_id: int, exps, welch: FrequencyProfile, stft_params) -> dict:
    agg = aggregate(exps)
    freqs = stft_params.bin_freqs(manifest.sample_rate)
    W = project(agg, freqs)
    D = derivative_profile(W)
    formats.write_aggregate(d / "aggregate.spc", agg)
    formats.write_profile_csv(d / "welch.csv", welch)
    formats.write_profile_csv(d / "projection.csv", W)
    formats.write_profile_csv(d / "derivative.csv", D)
    bins = tone_bins(manifest, class_id, stft_params)
    plotting.grid_map(agg.E, d / "aggregate.svg", f"class {class_id}, {agg.n_explanations} explanations", ["aggregate.spc"])
    plotting.welch_overlay(welch.values, W.values, d / "welch_projection.svg", "aggregated projection", tone_bins=bins, sources=["welch.csv", "projection.csv"])
    plotting.welch_overlay(welch.values, D.values, d / "welch_derivative.svg", "|d projection|", tone_bins=bins, sources=["welch.csv", "derivative.csv"])
    score = temporality_score(agg)
    return {"temporality": score, "temporality_flag": score > TEMPORALITY_FLAG}


def cmd_explain(run: Run, seed: int, class_id: int, checkpoint: Path | None) -> dict:
    m = run.manifest()
    if class_id not in m.class_ids:
        raise InputError(f"class {class_id} not in manifest classes {m.class_ids}")
    clf = _load_classifier(checkpoint or run.train_dir(seed) / "model.mdl")
    if class_id >= clf.n_classes:
        raise InputError(f"class {class_id} out of range for a {clf.n_classes}-class model")
    bank = run.bank()
    d = run.explain_dir(seed, class_id)
    d.mkdir(parents=True, exist_ok=True)

    def save(i, image, segmap, exps):
        formats.write_explanation(d / f"exp_{i:04d}.exp", exps[0])

    res = explain_class(
        [clf], bank, class_id, run.cfg.n_explanations,
        stft_params=run.cfg.stft, qs_params=run.cfg.quickshift, lime_params=run.cfg.lime,
        seed=seed, window_length=run.cfg.window_length, on_item=save,
    )
    info = _write_class_outputs(d, m, class_id, res.per_model[0], res.welch, run.cfg.stft)
    return {"dir": str(d), "n_explanations": run.cfg.n_explanations, **info}


def cmd_ensemble(run: Run, seed: int, class_ids: list[int], jobs: int) -> dict:
    seeds = run.cfg.ensemble_seeds(seed)
    if len(seeds) < 2:
        raise InputError("ensemble needs at least 2 retrainings")
    m = run.manifest()
    for c in class_ids:
        if c not in m.class_ids:
            raise InputError(f"class {c} not in manifest classes {m.class_ids}")
    bank = run.bank()
    todo = sorted({s for s in seeds if not (run.train_dir(s) / "model.mdl").exists()})
    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(_train_worker, [(run.cfg, str(run.out), s) for s in todo]))
    else:
        for s in todo:
            _train_one(run, bank, s)

    summary = {}
    for c in class_ids:
        d = run.ensemble_dir(c)
        missing = sorted({s for s in seeds if not (d / f"seed_{s}" / "derivative.csv").exists()})
        if missing:
            clfs = [_load_classifier(run.train_dir(s) / "model.mdl") for s in missing]
            res = explain_class(
                clfs, bank, c, run.cfg.n_explanations,
                stft_params=run.cfg.stft, qs_params=run.cfg.quickshift, lime_params=run.cfg.lime,
                seed=seed, window_length=run.cfg.window_length,
            )
            for k, s in enumerate(missing):
                sd = d / f"seed_{s}"
                sd.mkdir(parents=True, exist_ok=True)
                _write_class_outputs(sd, m, c, res.per_model[k], res.welch, run.cfg.stft)
        profiles = []
        for s in seeds:
            rows = formats.read_profile_csv(d / f"seed_{s}" / "derivative.csv")
            profiles.append(FrequencyProfile(rows["value"], "lime_derivative", rows["freq_hz"]))
        welch = formats.read_profile_csv(d / f"seed_{seeds[0]}" / "welch.csv")["value"]
        ens = ensemble_stats(profiles)
        formats.write_ensemble_csv(d / "ensemble.csv", ens)
        bins = tone_bins(m, c, run.cfg.stft)
        plotting.profile_grid([p.values for p in profiles], welch, d / "retrainings.svg", [f"seed_{s}/derivative.csv" for s in seeds])
        plotting.welch_overlay(welch, ens.mean.values, d / "ensemble.svg", "mean |d projection|", std=ens.std.values, tone_bins=bins, sources=["ensemble.csv"])
        summary[c] = str(d / "ensemble.csv")
    return {"ensemble": summary, "seeds": seeds}


def cmd_report(run: Run) -> dict:
    """Copy every figure of a run into ``report/`` with flattened names."""
    dest = run.out / "report"
    dest.mkdir(parents=True, exist_ok=True)
    copied = []
    for svg in sorted(run.out.rglob("*.svg")):
        if dest in svg.parents:
            continue
        name = "__".join(svg.relative_to(run.out).parts)
        shutil.copyfile(svg, dest / name)
        copied.append(name)
    if not copied:
        raise InputError(f"no figures found under {run.out}")
    (dest / "index.json").write_text(json.dumps(copied, indent=2), encoding="utf-8")
    return {"report": str(dest), "figures": len(copied)}


# entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spectro-explain", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="pipeline config JSON")
    common.add_argument("--seed", type=int, help=f"run seed (overrides {SEED_ENV} and the config)")
    common.add_argument("--out", type=Path, help="output directory (overrides the config)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for retrainings")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="render one signal file per class")
    sub.add_parser("train", parents=[common], help="train the reference classifier")
    e = sub.add_parser("explain", parents=[common], help="explain, aggregate and project one class")
    e.add_argument("--class", dest="class_id", type=int, required=True)
    e.add_argument("--checkpoint", type=Path)
    en = sub.add_parser("ensemble", parents=[common], help="retrain and average derivative profiles")
    en.add_argument("--class", dest="class_id", type=int, action="append")
    sub.add_parser("report", parents=[common], help="collect all figures of a run")
    return p


def resolve_config(args) -> tuple[PipelineConfig, int, bool]:
    """Config plus the run seed; the flag beats the env var, which beats the config."""
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    seed = cfg.seed
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            seed = int(env)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from exc
    if args.seed is not None:
        seed = args.seed
    if seed < 0 or seed >= 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if args.out is not None:
        cfg.out = str(args.out)
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    return cfg, seed, args.seed is not None or env is not None


def _fail(exc: BaseException, code: int) -> int:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg, seed, explicit = resolve_config(args)
        run = Run(cfg, Path(cfg.out))
        run.out.mkdir(parents=True, exist_ok=True)
        if args.command == "synth":
            result = cmd_synth(run, seed if explicit else None)
        elif args.command == "train":
            result = cmd_train(run, seed)
        elif args.command == "explain":
            result = cmd_explain(run, seed, args.class_id, args.checkpoint)
        elif args.command == "ensemble":
            classes = args.class_id or cfg.explained_classes(run.manifest())
            result = cmd_ensemble(run, seed, classes, args.jobs)
        else:
            result = cmd_report(run)
    except (InputError, ConfigError, formats.FormatError) as exc:
        return _fail(exc, 2)
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        return _fail(exc, 1)
    print(json.dumps(result, indent=2, default=str))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
