"""Synthetic corpora with known per-label latent intensities.

Each text is a bag of label-specific pseudo-words (``em3_w017`` style)
drawn in proportion to a hidden intensity vector, so token share tracks
latent intensity by construction. The latent table is returned beside
the dataset and is never written into it, which makes these corpora an
end-to-end check that training on discrete gold labels can recover the
continuous intensities.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Dataset, LabelVocabulary, Sample
from .errors import DataError, UsageError

MULTI_LABEL_CUT = 5.0  # latent midpoint that turns an intensity into a gold label


@dataclass(frozen=True)
class SynthSpec:
    num_labels: int = 5
    vocab_per_label: int = 30
    words_per_text: int = 80
    num_samples: int = 2000
    collapse: bool = True  # single-label mode: gold = argmax latent
    dirichlet_alpha: float = 0.8  # collapse-mode share concentration
    correlation: tuple[tuple[float, ...], ...] | None = None  # row-stochastic C x C mixing
    noise_std: float = 0.0  # optional Gaussian noise on the recorded latents
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_labels < 2:
            raise UsageError(f"need at least 2 labels, got {self.num_labels}")
        if self.num_samples < 10:
            raise UsageError(f"need at least 10 samples, got {self.num_samples}")
        if self.vocab_per_label < 1 or self.words_per_text < 1:
            raise UsageError("vocab_per_label and words_per_text must be >= 1")
        if self.correlation is not None:
            rows = [tuple(float(v) for v in row) for row in self.correlation]
            if len(rows) != self.num_labels or any(len(r) != self.num_labels for r in rows):
                raise UsageError(f"correlation matrix must be {self.num_labels}x{self.num_labels}")
            for i, row in enumerate(rows):
                if any(v < 0 for v in row) or abs(sum(row) - 1.0) > 1e-9:
                    raise UsageError(f"correlation row {i} must be non-negative and sum to 1")
            object.__setattr__(self, "correlation", tuple(rows))

    def to_dict(self) -> dict:
        return {
            "num_labels": self.num_labels,
            "vocab_per_label": self.vocab_per_label,
            "words_per_text": self.words_per_text,
            "num_samples": self.num_samples,
            "collapse": self.collapse,
            "dirichlet_alpha": self.dirichlet_alpha,
            "correlation": [list(r) for r in self.correlation] if self.correlation else None,
            "noise_std": self.noise_std,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        known = {
            "num_labels", "vocab_per_label", "words_per_text", "num_samples",
            "collapse", "dirichlet_alpha", "correlation", "noise_std", "seed",
        }
        unknown = set(d) - known
        if unknown:
            raise UsageError(f"unknown synth spec keys: {sorted(unknown)}")
        if d.get("correlation") is not None:
            d = dict(d, correlation=tuple(tuple(row) for row in d["correlation"]))
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "SynthSpec":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _draw_latents(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    """Hidden intensity vectors in [0, 10]^C, one row per sample."""
    c, m = spec.num_labels, spec.num_samples
    if spec.collapse:
        shares = rng.dirichlet(np.full(c, spec.dirichlet_alpha), size=m)
        latents = 10.0 * shares
    else:
        # One clearly dominant label per sample plus low background, so the
        # midpoint cut yields mostly 1-2 gold labels before mixing.
        latents = rng.uniform(0.0, 4.5, size=(m, c))
        primary = rng.integers(0, c, size=m)
        latents[np.arange(m), primary] = rng.uniform(6.0, 10.0, size=m)
    if spec.correlation is not None:
        mix = np.asarray(spec.correlation, dtype=np.float64)
        latents = latents @ mix.T  # convex rows keep values inside [0, 10]
    return latents


def generate(spec: SynthSpec) -> tuple[Dataset, np.ndarray]:
    """Build (dataset, latent table); the table never enters the dataset."""
    rng = np.random.default_rng(spec.seed)
    c = spec.num_labels
    latents = _draw_latents(spec, rng)
    vocab = LabelVocabulary(tuple(f"em{j}" for j in range(c)))

    samples: list[Sample] = []
    for i in range(spec.num_samples):
        z = latents[i]
        total = z.sum()
        shares = z / total if total > 0 else np.full(c, 1.0 / c)
        label_choices = rng.choice(c, size=spec.words_per_text, p=shares)
        word_choices = rng.integers(0, spec.vocab_per_label, size=spec.words_per_text)
        text = " ".join(f"em{j}_w{w:03d}" for j, w in zip(label_choices, word_choices))
        if spec.collapse:
            gold = frozenset({int(np.argmax(z))})
        else:
            gold = frozenset(int(j) for j in np.flatnonzero(z >= MULTI_LABEL_CUT))
            if not gold:
                gold = frozenset({int(np.argmax(z))})
        samples.append(Sample(id=f"synth{i}", text=text, gold=gold))

    if spec.noise_std > 0:
        latents = np.clip(latents + rng.normal(0.0, spec.noise_std, size=latents.shape), 0.0, 10.0)
    return Dataset(vocab=vocab, samples=samples, split="train"), latents


def recovery_score(annotated: Dataset, latents: np.ndarray | Sequence[Sequence[float]]) -> tuple[list[float], float]:
    """Per-label Pearson r between annotated and latent intensities, plus the mean."""
    latents = np.asarray(latents, dtype=np.float64)
    if latents.shape[0] != len(annotated.samples):
        raise DataError(
            f"latent table has {latents.shape[0]} rows for {len(annotated.samples)} samples"
        )
    if any(s.intensities is None for s in annotated.samples):
        raise DataError("annotated dataset is missing intensities")
    predicted = np.array([s.intensities for s in annotated.samples], dtype=np.float64)
    if predicted.shape != latents.shape:
        raise DataError(f"shape mismatch: annotated {predicted.shape} vs latent {latents.shape}")

    scores: list[float] = []
    for j in range(latents.shape[1]):
        a = predicted[:, j] - predicted[:, j].mean()
        b = latents[:, j] - latents[:, j].mean()
        denom = np.sqrt((a * a).sum() * (b * b).sum())
        scores.append(float((a * b).sum() / denom) if denom > 0 else 0.0)
    return scores, float(np.mean(scores))


def write_latents(latents: np.ndarray, labels: Sequence[str], path: str | Path) -> None:
    """Write the hidden intensity table as CSV with label-name headers."""
    lines = [",".join(labels)]
    for row in np.asarray(latents, dtype=np.float64):
        lines.append(",".join(f"{v:.6f}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
