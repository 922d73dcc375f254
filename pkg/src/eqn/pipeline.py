"""Orchestration of the two-stage annotation workflow.

The core run fits a featurizer and Model 1 on the 0/10-initialized
training set and annotates the test set with clamped intensities. The
full run additionally annotates the training set with Model 1, restores
gold positions to 10.0 (label regression), retrains from scratch on the
regressed targets to get Model 2, and annotates the test set again.
Every step is driven by one run seed, so a run directory is a pure
function of (inputs, config).
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import corpus, featurize, labelspace, regressor
from .corpus import Dataset
from .errors import DataError, UsageError
from .featurize import FeaturizerConfig
from .labelspace import AnnotationConfig
from .regressor import Checkpoint, TrainConfig, TrainReport

log = logging.getLogger("eqn.pipeline")

RESAMPLING_MODES = ("off", "oversample", "undersample")


@dataclass(frozen=True)
class PipelineConfig:
    featurizer: FeaturizerConfig = FeaturizerConfig()
    train: TrainConfig = TrainConfig()
    annotation: AnnotationConfig = AnnotationConfig()
    backend: str = "linear"
    val_fraction: float = 0.1
    resampling: str = "off"
    warm_start: bool = False
    regress_threshold: float | None = None  # optional Eq.-8 cut before label regression

    def __post_init__(self) -> None:
        if self.backend not in ("linear", "mlp"):
            raise UsageError(f"unknown backend {self.backend!r}")
        if not 0.0 < self.val_fraction <= 0.5:
            raise UsageError(f"val_fraction must be in (0, 0.5], got {self.val_fraction}")
        if self.resampling not in RESAMPLING_MODES:
            raise UsageError(f"resampling must be one of {RESAMPLING_MODES}, got {self.resampling!r}")

    @property
    def seed(self) -> int:
        return self.train.seed

    def to_dict(self) -> dict:
        return {
            "featurizer": self.featurizer.to_dict(),
            "train": self.train.to_dict(),
            "threshold": self.annotation.threshold,
            "backend": self.backend,
            "val_fraction": self.val_fraction,
            "resampling": self.resampling,
            "warm_start": self.warm_start,
            "regress_threshold": self.regress_threshold,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {
            "featurizer", "train", "threshold", "backend",
            "val_fraction", "resampling", "warm_start", "regress_threshold",
        }
        unknown = set(d) - known
        if unknown:
            raise UsageError(f"unknown pipeline config keys: {sorted(unknown)}")
        kwargs: dict = {}
        if "featurizer" in d:
            kwargs["featurizer"] = FeaturizerConfig.from_dict(d["featurizer"])
        if "train" in d:
            kwargs["train"] = TrainConfig.from_dict(d["train"])
        if "threshold" in d:
            kwargs["annotation"] = AnnotationConfig(threshold=d["threshold"])
        for key in ("backend", "val_fraction", "resampling", "warm_start", "regress_threshold"):
            if key in d:
                kwargs[key] = d[key]
        return cls(**kwargs)


def config_fingerprint(cfg: PipelineConfig) -> str:
    """Content hash stamped into every artifact a run produces."""
    blob = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


@dataclass
class PipelineRun:
    config: PipelineConfig
    seed: int
    fingerprint: str
    model1: Checkpoint
    test_coeqn: Dataset
    reports: dict[str, TrainReport]
    model2: Checkpoint | None = None
    train_regressed: Dataset | None = None
    test_eqn: Dataset | None = None


def split_validation(ds: Dataset, cfg: PipelineConfig) -> tuple[list[int], list[int]]:
    """Fit/validation index partition: last fraction of the seeded shuffle.

    Tiny corpora can yield an empty validation split; model selection
    then falls back to the training loss.
    """
    m = len(ds.samples)
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(m)
    n_val = min(int(round(m * cfg.val_fraction)), m - 1)
    return [int(i) for i in order[: m - n_val]], [int(i) for i in order[m - n_val :]]


def _resample(ds: Dataset, fit_idx: list[int], mode: str, seed: int) -> list[int]:
    """Duplicate (or drop) fit indices to pull per-label counts toward the median.

    Only multiplicity changes; texts and gold sets are untouched.
    """
    if mode == "off":
        return fit_idx
    counts = np.zeros(ds.num_labels, dtype=np.int64)
    for i in fit_idx:
        for j in ds.samples[i].gold:
            counts[j] += 1
    present = counts[counts > 0]
    if present.size == 0:
        return fit_idx
    median = int(np.median(present))
    rng = np.random.default_rng(seed + 0x5EED)
    out = list(fit_idx)
    if mode == "oversample":
        for j in range(ds.num_labels):
            members = [i for i in fit_idx if j in ds.samples[i].gold]
            if not members or counts[j] >= median:
                continue
            extra = rng.choice(len(members), size=median - counts[j], replace=True)
            out.extend(members[int(e)] for e in extra)
    else:  # undersample
        for j in range(ds.num_labels):
            if counts[j] <= median:
                continue
            # Only drop samples whose every gold label is over-represented.
            droppable = [
                i for i in out
                if j in ds.samples[i].gold and all(counts[g] > median for g in ds.samples[i].gold)
            ]
            n_drop = min(len(droppable), counts[j] - median)
            if n_drop <= 0:
                continue
            drop = {droppable[int(k)] for k in rng.choice(len(droppable), size=n_drop, replace=False)}
            removed = 0
            kept = []
            for i in out:
                if i in drop and removed < n_drop and j in ds.samples[i].gold:
                    removed += 1
                    for g in ds.samples[i].gold:
                        counts[g] -= 1
                    drop.discard(i)
                    continue
                kept.append(i)
            out = kept
    return out


def _featurize_all(ds: Dataset, indices: list[int], cfg: FeaturizerConfig, idf: list[float] | None):
    return [featurize.featurize(ds.samples[i].text, cfg, idf) for i in indices]


def _annotate(ckpt: Checkpoint, ds: Dataset, threshold: float | None = None) -> Dataset:
    feats = [featurize.featurize(s.text, ckpt.featurizer, ckpt.idf) for s in ds.samples]
    raw = regressor.predict_batch(ckpt.model, feats)
    rows = []
    for r in raw:
        v = labelspace.clamp(r)
        if threshold is not None:
            v = labelspace.annotate_threshold(r, AnnotationConfig(threshold=threshold))
        rows.append(v.tolist())
    return corpus.with_intensities(ds, rows)


def annotate_dataset(
    ckpt: Checkpoint, ds: Dataset, threshold: float | None = None, expected_fingerprint: str | None = None
) -> Dataset:
    """Annotate every sample with clamped model intensities, gold untouched."""
    if expected_fingerprint is not None and expected_fingerprint != ckpt.fingerprint:
        raise DataError(
            "featurizer fingerprint mismatch: the checkpoint was trained with a different "
            f"featurizer state ({ckpt.fingerprint[:12]} != {expected_fingerprint[:12]})"
        )
    if ds.vocab.names != ckpt.labels:
        raise DataError(
            f"dataset vocabulary {list(ds.vocab.names[:3])}... does not match checkpoint labels"
        )
    return _annotate(ckpt, ds, threshold)


def _check_pre(train_ds: Dataset, test_ds: Dataset) -> None:
    if train_ds.vocab.names != test_ds.vocab.names:
        raise DataError("train and test datasets use different label vocabularies")
    for s in train_ds.samples:
        if not s.gold:
            raise DataError(f"training sample {s.id} has an empty gold set")


def run_coeqn(
    train_ds: Dataset, test_ds: Dataset, cfg: PipelineConfig, val_ds: Dataset | None = None
) -> PipelineRun:
    """Initialize, train Model 1, and annotate the test set."""
    _check_pre(train_ds, test_ds)
    run, _ = _run_stage1(train_ds, test_ds, cfg, val_ds)
    return run


def _run_stage1(train_ds, test_ds, cfg, val_ds):
    if val_ds is not None:
        if val_ds.vocab.names != train_ds.vocab.names:
            raise DataError("validation dataset uses a different label vocabulary")
        fit_idx = list(range(len(train_ds.samples)))
        val_feats_source: tuple[Dataset, list[int]] = (val_ds, list(range(len(val_ds.samples))))
    else:
        fit_idx, val_idx = split_validation(train_ds, cfg)
        val_feats_source = (train_ds, val_idx)
    fit_idx = _resample(train_ds, fit_idx, cfg.resampling, cfg.seed)

    fcfg = cfg.featurizer
    idf = None
    if fcfg.weighting == "tfidf":
        fit_only = Dataset(train_ds.vocab, [train_ds.samples[i] for i in sorted(set(fit_idx))], "train")
        idf = featurize.fit_idf(fit_only, fcfg)
    log.info("fit split: %d samples, val: %d", len(fit_idx), len(val_feats_source[1]))

    c = train_ds.num_labels
    fit_feats = _featurize_all(train_ds, fit_idx, fcfg, idf)
    fit_targets = [labelspace.init_full_labels(train_ds.samples[i].gold, c) for i in fit_idx]
    val_src, val_idx = val_feats_source
    val_feats = _featurize_all(val_src, val_idx, fcfg, idf)
    val_targets = [labelspace.init_full_labels(val_src.samples[i].gold, c) for i in val_idx]

    model1, report1 = regressor.train(
        fit_feats, fit_targets, val_feats, val_targets, cfg.train, cfg.backend, dim=fcfg.dim
    )
    ckpt1 = Checkpoint(cfg.backend, model1, train_ds.vocab.names, fcfg, idf)
    test_coeqn = _annotate(ckpt1, test_ds)
    run = PipelineRun(
        config=cfg,
        seed=cfg.seed,
        fingerprint=config_fingerprint(cfg),
        model1=ckpt1,
        test_coeqn=test_coeqn,
        reports={"model1": report1},
    )
    stage1_state = (fit_idx, val_feats_source, fit_feats, val_feats, idf)
    return run, stage1_state


def _assert_regressed(train_ds: Dataset, annotated: Dataset, regressed: Dataset) -> None:
    """Regressed targets must be 10.0 on gold and Model 1's values elsewhere."""
    for orig, ann, reg in zip(train_ds.samples, annotated.samples, regressed.samples):
        assert reg.intensities is not None and ann.intensities is not None
        for j, value in enumerate(reg.intensities):
            if j in orig.gold:
                if value != corpus.INTENSITY_MAX:
                    raise DataError(f"sample {orig.id}: gold label {j} not restored to 10.0")
            elif value != ann.intensities[j]:
                raise DataError(f"sample {orig.id}: non-gold label {j} was altered by regression")


def run_eqn(
    train_ds: Dataset, test_ds: Dataset, cfg: PipelineConfig, val_ds: Dataset | None = None
) -> PipelineRun:
    """Full two-model run: label-regress the training set and retrain."""
    _check_pre(train_ds, test_ds)
    run, state = _run_stage1(train_ds, test_ds, cfg, val_ds)
    fit_idx, (val_src, val_idx), fit_feats, val_feats, _idf = state

    train_annotated = _annotate(run.model1, train_ds, threshold=cfg.regress_threshold)
    regressed_rows = [
        labelspace.regress_labels(s.gold, a.intensities)
        for s, a in zip(train_ds.samples, train_annotated.samples)
    ]
    train_regressed = corpus.with_intensities(train_ds, [r.tolist() for r in regressed_rows])
    _assert_regressed(train_ds, train_annotated, train_regressed)

    # Validation targets are regressed the same way when the split comes
    # from the training set; an external validation set keeps 0/10 targets.
    if val_src is train_ds:
        target_rows = {i: regressed_rows[i] for i in set(fit_idx) | set(val_idx)}
        fit_targets = [target_rows[i] for i in fit_idx]
        val_targets = [target_rows[i] for i in val_idx]
    else:
        fit_targets = [regressed_rows[i] for i in fit_idx]
        val_targets = [
            labelspace.init_full_labels(val_src.samples[i].gold, train_ds.num_labels) for i in val_idx
        ]

    train_cfg2 = replace(cfg.train, seed=cfg.train.seed + 1)
    initial = run.model1.model.copy() if cfg.warm_start else None
    model2, report2 = regressor.train(
        fit_feats, fit_targets, val_feats, val_targets, train_cfg2, cfg.backend,
        dim=cfg.featurizer.dim, initial=initial,
    )
    ckpt2 = Checkpoint(cfg.backend, model2, train_ds.vocab.names, cfg.featurizer, run.model1.idf)
    run.model2 = ckpt2
    run.train_regressed = train_regressed
    run.test_eqn = _annotate(ckpt2, test_ds)
    run.reports["model2"] = report2
    return run


def persist_run(run: PipelineRun, out_dir: str | Path) -> Path:
    """Write the run directory; identical (inputs, config, seed) give identical bytes."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "config": run.config.to_dict(),
        "seed": run.seed,
        "fingerprint": run.fingerprint,
        "mode": "eqn" if run.model2 is not None else "coeqn",
    }
    (out / "config.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    regressor.save_checkpoint(run.model1, out / "model1.ckpt")
    corpus.emit_full(run.test_coeqn, out / "test_annotated_coeqn.csv")
    if run.model2 is not None:
        regressor.save_checkpoint(run.model2, out / "model2.ckpt")
        assert run.train_regressed is not None and run.test_eqn is not None
        corpus.emit_full(run.train_regressed, out / "train_regressed.csv")
        corpus.emit_full(run.test_eqn, out / "test_annotated_eqn.csv")
    report = {
        "fingerprint": run.fingerprint,
        "seed": run.seed,
        "threshold": run.config.annotation.threshold,
        "train_reports": {name: r.to_dict() for name, r in sorted(run.reports.items())},
    }
    (out / "report.json").write_text(json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return out
