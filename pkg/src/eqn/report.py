"""File emission for evaluation artifacts: CSV tables, JSON reports, figures.

Figures are rendered with matplotlib's Agg backend straight to SVG.
Byte determinism matters here (reports are compared across reruns), so
the SVG hash salt is pinned and no creation date is embedded.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .errors import DataError
from .metrics import HitTable, MetricsReport, PearsonMatrix

_SVG_SALT = "eqn"


def _save_svg(fig, path: Path) -> None:
    with plt.rc_context({"svg.hashsalt": _SVG_SALT}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def write_json(payload: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def write_hit_table_csv(table: HitTable, path: str | Path) -> None:
    """Cardinality rows plus a Total row and cumulative Top-n rows."""
    rows = [["class", "corpus_count", "label_count", "hits", "hit_rate"]]
    for b in table.buckets:
        suffix = "label" if b.cardinality == 1 else "labels"
        rows.append([f"{b.cardinality} {suffix}", b.corpus_count, b.label_count, b.hits, f"{b.hit_rate:.4f}"])
    t = table.total
    rows.append(["Total", t.corpus_count, t.label_count, t.hits, f"{t.hit_rate:.4f}"])
    for n, b in enumerate(table.top_n, start=1):
        rows.append([f"Top{n}", b.corpus_count, b.label_count, b.hits, f"{b.hit_rate:.4f}"])
    _write_rows(rows, path)


def write_per_label_csv(report: MetricsReport, labels: tuple[str, ...], path: str | Path) -> None:
    """Per-label precision/recall/F1 with macro-average and std rows."""
    rows = [["label", "precision", "recall", "f1"]]
    for name, r in zip(labels, report.per_label):
        rows.append([name, f"{r.precision:.4f}", f"{r.recall:.4f}", f"{r.f1:.4f}"])
    rows.append([
        "macro-average",
        f"{report.macro_precision:.4f}", f"{report.macro_recall:.4f}", f"{report.macro_f1:.4f}",
    ])
    rows.append(["std", f"{report.std_precision:.4f}", f"{report.std_recall:.4f}", f"{report.std_f1:.4f}"])
    _write_rows(rows, path)


def _write_rows(rows: list[list], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as f:
        csv.writer(f, lineterminator="\n").writerows(rows)


def export_heatmap(pm: PearsonMatrix, out_dir: str | Path, stem: str = "pearson") -> tuple[Path, Path]:
    """Write {stem}.csv and a diverging-scale {stem}.svg heatmap."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{stem}.csv"
    svg_path = out / f"{stem}.svg"

    rows: list[list] = [["label", *pm.labels]]
    for name, row in zip(pm.labels, pm.values):
        rows.append([name, *(f"{v:.9f}" for v in row)])
    _write_rows(rows, csv_path)

    c = len(pm.labels)
    size = max(4.0, 0.42 * c + 1.8)
    fig, ax = plt.subplots(figsize=(size, size * 0.92))
    im = ax.imshow(pm.values, cmap="coolwarm", vmin=-1.0, vmax=1.0)
    ax.set_xticks(range(c), pm.labels, rotation=90, fontsize=7)
    ax.set_yticks(range(c), pm.labels, fontsize=7)
    text_size = 7 if c <= 10 else 5
    for i in range(c):
        for j in range(c):
            v = pm.values[i, j]
            color = "white" if abs(v) > 0.6 else "black"
            ax.text(j, i, f"{v:.2f}", ha="center", va="center", color=color, fontsize=text_size)
    fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
    fig.tight_layout()
    _save_svg(fig, svg_path)
    return csv_path, svg_path


def read_matrix_csv(path: str | Path) -> tuple[tuple[str, ...], np.ndarray]:
    """Load a label-headed correlation matrix written by export_heatmap."""
    with Path(path).open("r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if not header or header[0] != "label":
            raise DataError(f"{path}: not a matrix CSV")
        labels = tuple(header[1:])
        values = []
        for row in reader:
            values.append([float(v) for v in row[1:]])
    matrix = np.asarray(values, dtype=np.float64)
    if matrix.shape != (len(labels), len(labels)):
        raise DataError(f"{path}: matrix shape {matrix.shape} does not match {len(labels)} labels")
    return labels, matrix


def export_per_label_figure(report: MetricsReport, labels: tuple[str, ...], path: str | Path) -> None:
    """Grouped bar chart of per-label precision/recall/F1."""
    c = len(labels)
    x = np.arange(c)
    width = 0.27
    fig, ax = plt.subplots(figsize=(max(6.0, 0.45 * c), 4.2))
    ax.bar(x - width, [r.precision for r in report.per_label], width, label="precision")
    ax.bar(x, [r.recall for r in report.per_label], width, label="recall")
    ax.bar(x + width, [r.f1 for r in report.per_label], width, label="F1")
    ax.axhline(report.macro_f1, color="gray", linestyle="--", linewidth=0.8, label="macro F1")
    ax.set_xticks(x, labels, rotation=90, fontsize=7)
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("score")
    ax.set_title(f"per-label metrics ({report.policy})")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save_svg(fig, Path(path))
