"""Command-line front end.

Subcommands: init, run, annotate, eval, pearson, synth. Everything is
flag- or config-file-driven; outputs are batch artifacts. Exit codes:
0 success, 1 usage error, 2 data error, 3 numerical failure. Set
EQN_LOG=debug|info|warning for stderr verbosity.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from .errors import DataError, NumericalError, UsageError

log = logging.getLogger("eqn.cli")

_PATH_KEYS = {"train", "test", "val", "vocab", "out"}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # exit 1 instead of argparse's 2
        raise UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="eqn", description="Full-label intensity annotation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="expand a compact corpus into 0/10 full-label form")
    p.add_argument("--compact", required=True, help="compact text,labels CSV")
    p.add_argument("--vocab", required=True, help="label names, one per line")
    p.add_argument("--out", required=True, help="output full-label CSV")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("run", help="train and annotate (core or full pipeline)")
    p.add_argument("--mode", choices=["coeqn", "eqn"], default="coeqn")
    p.add_argument("--config", help="JSON pipeline config (may also hold the paths)")
    p.add_argument("--train", help="training CSV (compact needs --vocab, full is self-describing)")
    p.add_argument("--test", help="test CSV to annotate")
    p.add_argument("--val", help="optional validation CSV (otherwise split from train)")
    p.add_argument("--vocab", help="label names file for compact CSVs")
    p.add_argument("--out", help="run directory")
    p.add_argument("--seed", type=int, help="override the run seed")
    p.add_argument("--threshold", type=float, help="override the annotation threshold")
    p.add_argument("--backend", choices=["linear", "mlp"], help="override the model backend")
    p.add_argument("--threads", type=int, help="cap numeric worker threads")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("annotate", help="annotate a dataset with a trained checkpoint")
    p.add_argument("--model", required=True, help="model checkpoint")
    p.add_argument("--input", required=True, help="CSV to annotate (compact or full)")
    p.add_argument("--out", required=True, help="output full-label CSV")
    p.add_argument("--threshold", type=float, help="zero intensities below this value")
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("eval", help="score an annotated dataset")
    p.add_argument("--annotated", required=True, help="full-label CSV with gold labels")
    p.add_argument("--policy", choices=["oracle-k", "threshold"], default="oracle-k")
    p.add_argument("--threshold", type=float, default=1.0, help="threshold for the threshold policy")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pearson", help="label correlation matrix and heatmap")
    p.add_argument("--annotated", required=True, help="full-label CSV")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_pearson)

    p = sub.add_parser("synth", help="generate a synthetic corpus with known latents")
    p.add_argument("--spec", required=True, help="JSON synthesis spec")
    p.add_argument("--out", required=True, help="output compact corpus CSV")
    p.add_argument("--latent", required=True, help="output latent intensity CSV")
    p.set_defaults(func=cmd_synth)
    return parser


def _configure_logging() -> None:
    level = getattr(logging, os.environ.get("EQN_LOG", "warning").upper(), logging.WARNING)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def _require_file(path: str | None, what: str) -> Path:
    if not path:
        raise UsageError(f"missing required {what} path")
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} file not found: {p}")
    return p


def _sniff_columns(path: Path) -> int:
    with path.open("r", encoding="utf-8", newline="") as f:
        header = next(csv.reader(f), None)
    if not header:
        raise DataError(f"{path}: file is empty")
    return len(header)


def _load_dataset(path: Path, vocab_path: str | None, split: str):
    from . import corpus

    if _sniff_columns(path) == 2:
        if not vocab_path:
            raise UsageError(f"{path} is a compact CSV; pass --vocab with the label names")
        vocab = corpus.LabelVocabulary.from_lines(
            _require_file(vocab_path, "vocab").read_text(encoding="utf-8").splitlines()
        )
        return corpus.load_compact(path, vocab, split=split)
    return corpus.load_full(path, split=split)


def _write_meta(out: Path, command: str, config: dict) -> None:
    """Sidecar stamping outputs with the config fingerprint and seed."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    meta = {"command": command, "config": config, "fingerprint": hashlib.sha256(blob).hexdigest()}
    target = out / "run_meta.json" if out.is_dir() else out.with_suffix(out.suffix + ".meta.json")
    target.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def cmd_init(args) -> int:
    from . import corpus, labelspace

    vocab = corpus.LabelVocabulary.from_lines(
        _require_file(args.vocab, "vocab").read_text(encoding="utf-8").splitlines()
    )
    ds = corpus.load_compact(_require_file(args.compact, "compact corpus"), vocab)
    rows = [labelspace.init_full_labels(s.gold, vocab.size).tolist() for s in ds.samples]
    out = Path(args.out)
    corpus.emit_full(corpus.with_intensities(ds, rows), out)
    _write_meta(out, "init", {"compact": str(args.compact), "vocab": list(vocab.names)})
    print(f"wrote {out} ({len(ds.samples)} samples, {vocab.size} labels)")
    return 0


def _build_pipeline_config(args) -> tuple["object", dict]:
    from .pipeline import PipelineConfig

    raw: dict = {}
    if args.config:
        cfg_path = _require_file(args.config, "config")
        try:
            raw = json.loads(cfg_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise UsageError(f"{cfg_path}: invalid JSON ({e})") from None
        if not isinstance(raw, dict):
            raise UsageError(f"{cfg_path}: config must be a JSON object")
    paths = {k: raw.pop(k) for k in list(raw) if k in _PATH_KEYS}
    for key in ("train", "test", "val", "vocab", "out"):
        if getattr(args, key, None):
            paths[key] = getattr(args, key)
    if args.backend:
        raw["backend"] = args.backend
    if args.threshold is not None:
        raw["threshold"] = args.threshold
    if args.seed is not None:
        raw.setdefault("train", {})["seed"] = args.seed
    cfg = PipelineConfig.from_dict(raw)
    return cfg, paths


def cmd_run(args) -> int:
    from . import pipeline

    cfg, paths = _build_pipeline_config(args)
    train_path = _require_file(paths.get("train"), "train corpus")
    test_path = _require_file(paths.get("test"), "test corpus")
    if not paths.get("out"):
        raise UsageError("missing required output directory (--out)")
    vocab_path = paths.get("vocab")
    train_ds = _load_dataset(train_path, vocab_path, "train")
    test_ds = _load_dataset(test_path, vocab_path, "test")
    val_ds = _load_dataset(_require_file(paths["val"], "validation corpus"), vocab_path, "validation") \
        if paths.get("val") else None

    runner = pipeline.run_eqn if args.mode == "eqn" else pipeline.run_coeqn
    log.info("starting %s run (seed=%d, backend=%s)", args.mode, cfg.seed, cfg.backend)
    run = runner(train_ds, test_ds, cfg, val_ds=val_ds)
    out = pipeline.persist_run(run, paths["out"])
    for name, rep in sorted(run.reports.items()):
        final = rep.val_losses[-1] if rep.val_losses else rep.train_losses[-1]
        print(f"{name}: {len(rep.train_losses)} epochs, best epoch {rep.best_epoch}, loss {final:.4f}")
    print(f"run directory: {out}")
    return 0


def cmd_annotate(args) -> int:
    from . import corpus, pipeline, regressor

    ckpt = regressor.load_checkpoint(_require_file(args.model, "model checkpoint"))
    path = _require_file(args.input, "input corpus")
    if _sniff_columns(path) == 2:
        ds = corpus.load_compact(path, corpus.LabelVocabulary(ckpt.labels), split="unlabeled")
    else:
        ds = corpus.load_full(path)
    annotated = pipeline.annotate_dataset(ckpt, ds, threshold=args.threshold)
    out = Path(args.out)
    corpus.emit_full(annotated, out)
    _write_meta(out, "annotate", {
        "model": str(args.model), "threshold": args.threshold, "fingerprint": ckpt.fingerprint,
    })
    print(f"wrote {out} ({len(annotated.samples)} samples)")
    return 0


def cmd_eval(args) -> int:
    from . import corpus, metrics, report

    ds = corpus.load_full(_require_file(args.annotated, "annotated corpus"))
    gold_sets = [s.gold for s in ds.samples]
    if args.policy == "oracle-k":
        predicted = metrics.oracle_k_predictions(ds)
        threshold = None
    else:
        predicted = metrics.threshold_predictions(ds, args.threshold)
        threshold = args.threshold
    rep = metrics.build_report(gold_sets, predicted, ds.num_labels, args.policy, threshold)

    gold_bearing = [s for s in ds.samples if s.gold]
    table = None
    if gold_bearing:
        subset = corpus.Dataset(ds.vocab, gold_bearing, ds.split)
        table = metrics.hit_table(subset)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = {"policy": args.policy, "threshold": threshold, "annotated": str(args.annotated)}
    payload = dict(rep.to_dict(), labels=list(ds.vocab.names))
    if table is not None:
        payload["hit_table"] = {
            "buckets": [
                {"cardinality": b.cardinality, "corpus_count": b.corpus_count,
                 "label_count": b.label_count, "hits": b.hits, "hit_rate": b.hit_rate}
                for b in table.buckets
            ],
            "top_n": [
                {"n": n, "hits": b.hits, "hit_rate": b.hit_rate}
                for n, b in enumerate(table.top_n, start=1)
            ],
        }
        report.write_hit_table_csv(table, out / "hit_table.csv")
    report.write_json(payload, out / "report.json")
    report.write_per_label_csv(rep, ds.vocab.names, out / "per_label.csv")
    report.export_per_label_figure(rep, ds.vocab.names, out / "metrics.svg")
    _write_meta(out, "eval", config)
    print(
        f"policy={args.policy} sample P/R/F1 = "
        f"{rep.sample.precision:.4f}/{rep.sample.recall:.4f}/{rep.sample.f1:.4f}, "
        f"macro F1 = {rep.macro_f1:.4f}"
    )
    print(f"reports in {out}")
    return 0


def cmd_pearson(args) -> int:
    from . import corpus, metrics, report

    ds = corpus.load_full(_require_file(args.annotated, "annotated corpus"))
    pm = metrics.pearson_matrix(ds)
    out = Path(args.out)
    csv_path, svg_path = report.export_heatmap(pm, out)
    _write_meta(out, "pearson", {"annotated": str(args.annotated)})
    if any(pm.constant):
        flagged = [name for name, const in zip(pm.labels, pm.constant) if const]
        log.warning("constant intensity columns correlate as 0: %s", ", ".join(flagged))
    print(f"wrote {csv_path} and {svg_path} ({len(pm.labels)}x{len(pm.labels)})")
    return 0


def cmd_synth(args) -> int:
    from . import corpus, synth

    spec = synth.SynthSpec.from_json(_require_file(args.spec, "synth spec"))
    ds, latents = synth.generate(spec)
    out = Path(args.out)
    corpus.emit_compact(ds, out)
    synth.write_latents(latents, ds.vocab.names, args.latent)
    _write_meta(out, "synth", spec.to_dict())
    print(f"wrote {out} ({len(ds.samples)} samples) and {args.latent}")
    return 0


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "threads", None):
            if args.threads < 1:
                raise UsageError(f"--threads must be >= 1, got {args.threads}")
            for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
                os.environ[var] = str(args.threads)
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
