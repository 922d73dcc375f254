"""Dataset loading and serialization.

Two CSV layouts are supported. The compact layout has two columns,
``text`` and ``labels``, where ``labels`` is a comma-separated list of
integer label indices (possibly empty). The full layout extends it with
one intensity column per label name, each value in [0, 10]. Both are
UTF-8 with LF line endings; intensities are serialized at 2 decimals.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DataError

INTENSITY_MIN = 0.0
INTENSITY_MAX = 10.0


@dataclass(frozen=True)
class LabelVocabulary:
    """Ordered set of emotion category names."""

    names: tuple[str, ...]
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(self.names) < 2:
            raise DataError(f"vocabulary needs at least 2 labels, got {len(self.names)}")
        if len(set(self.names)) != len(self.names):
            raise DataError("vocabulary contains duplicate label names")
        if any(not n for n in self.names):
            raise DataError("vocabulary contains an empty label name")
        object.__setattr__(self, "_index", {n: j for j, n in enumerate(self.names)})

    @property
    def size(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self._index[name]

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "LabelVocabulary":
        """Build from one label name per line, skipping blanks."""
        return cls(tuple(s.strip() for s in lines if s.strip()))


@dataclass
class Sample:
    """One text with its gold label set and optional intensity vector."""

    id: str
    text: str
    gold: frozenset[int]
    intensities: list[float] | None = None

    def validate(self, num_labels: int) -> None:
        for j in self.gold:
            if not 0 <= j < num_labels:
                raise DataError(f"sample {self.id}: label index {j} out of range (C={num_labels})")
        if self.intensities is not None:
            if len(self.intensities) != num_labels:
                raise DataError(
                    f"sample {self.id}: intensity vector has length "
                    f"{len(self.intensities)}, expected {num_labels}"
                )
            for v in self.intensities:
                if not INTENSITY_MIN <= v <= INTENSITY_MAX:
                    raise DataError(f"sample {self.id}: intensity {v} outside [0, 10]")


@dataclass
class Dataset:
    """Ordered samples sharing one label vocabulary."""

    vocab: LabelVocabulary
    samples: list[Sample]
    split: str = "train"

    def __post_init__(self) -> None:
        if not self.samples:
            raise DataError("dataset is empty")
        for s in self.samples:
            s.validate(self.vocab.size)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def num_labels(self) -> int:
        return self.vocab.size


def _parse_gold(raw: str, num_labels: int, row: int) -> frozenset[int]:
    raw = raw.strip()
    if not raw:
        return frozenset()
    indices = set()
    for part in raw.split(","):
        part = part.strip()
        try:
            j = int(part)
        except ValueError:
            raise DataError(f"row {row}: non-integer label index {part!r}") from None
        if not 0 <= j < num_labels:
            raise DataError(f"row {row}: label index {j} out of range (C={num_labels})")
        indices.add(j)
    return frozenset(indices)


def load_compact(path: str | Path, vocab: LabelVocabulary, split: str = "train") -> Dataset:
    """Load a two-column text,labels CSV against a known vocabulary."""
    path = Path(path)
    samples: list[Sample] = []
    with path.open("r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: file is empty")
        if len(header) != 2 or [h.strip().lower() for h in header] != ["text", "labels"]:
            raise DataError(f"{path}: expected header text,labels, got {header}")
        for row_num, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise DataError(f"{path}: row {row_num} has {len(row)} columns, expected 2")
            text, labels_raw = row
            gold = _parse_gold(labels_raw, vocab.size, row_num)
            samples.append(Sample(id=f"r{row_num - 1}", text=text, gold=gold))
    return Dataset(vocab=vocab, samples=samples, split=split)


def load_full(path: str | Path, split: str = "train") -> Dataset:
    """Load a full-label CSV, reconstructing the vocabulary from the header."""
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: file is empty")
        if len(header) < 4 or [h.strip().lower() for h in header[:2]] != ["text", "labels"]:
            raise DataError(
                f"{path}: expected header text,labels followed by label columns, got {header[:4]}..."
            )
        vocab = LabelVocabulary(tuple(h.strip() for h in header[2:]))
        expected_cols = 2 + vocab.size
        samples: list[Sample] = []
        for row_num, row in enumerate(reader, start=2):
            if len(row) != expected_cols:
                raise DataError(
                    f"{path}: row {row_num} has {len(row)} columns, expected {expected_cols}"
                )
            text, labels_raw = row[0], row[1]
            gold = _parse_gold(labels_raw, vocab.size, row_num)
            intensities: list[float] = []
            for col, cell in zip(header[2:], row[2:]):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: row {row_num}, column {col!r}: non-numeric intensity {cell!r}"
                    ) from None
                if not INTENSITY_MIN <= v <= INTENSITY_MAX:
                    raise DataError(
                        f"{path}: row {row_num}, column {col!r}: intensity {v} outside [0, 10]"
                    )
                intensities.append(v)
            samples.append(Sample(id=f"r{row_num - 1}", text=text, gold=gold, intensities=intensities))
    return Dataset(vocab=vocab, samples=samples, split=split)


def _quote(value: str) -> str:
    return '"' + value.replace('"', '""') + '"'


def _format_gold(gold: frozenset[int]) -> str:
    return ",".join(str(j) for j in sorted(gold))


def emit_compact(ds: Dataset, path: str | Path) -> None:
    """Write the two-column layout; intensities, if any, are dropped."""
    path = Path(path)
    lines = ["text,labels"]
    for s in ds.samples:
        lines.append(f"{_quote(s.text)},{_quote(_format_gold(s.gold))}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def emit_full(ds: Dataset, path: str | Path) -> None:
    """Write the full layout with 2-decimal intensities, in vocab column order."""
    path = Path(path)
    for s in ds.samples:
        if s.intensities is None:
            raise DataError(f"sample {s.id} has no intensities; cannot emit full layout")
    header = "text,labels," + ",".join(ds.vocab.names)
    lines = [header]
    for s in ds.samples:
        assert s.intensities is not None
        values = ",".join(f"{v:.2f}" for v in s.intensities)
        lines.append(f"{_quote(s.text)},{_quote(_format_gold(s.gold))},{values}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def with_intensities(ds: Dataset, rows: Sequence[Sequence[float]], split: str | None = None) -> Dataset:
    """Copy of ``ds`` with intensity vectors attached, order preserved."""
    if len(rows) != len(ds.samples):
        raise DataError(f"got {len(rows)} intensity rows for {len(ds.samples)} samples")
    samples = [
        Sample(id=s.id, text=s.text, gold=s.gold, intensities=[float(v) for v in row])
        for s, row in zip(ds.samples, rows)
    ]
    return Dataset(vocab=ds.vocab, samples=samples, split=split or ds.split)
