"""Text to sparse feature vectors via the hashing trick.

Tokens are hashed into a fixed power-of-two index space with a keyed
blake2b digest, so feature indices are reproducible across runs,
processes, and platforms (unlike the interpreter's salted ``hash``).
Collisions are accepted; at the default dimension of 2**15 they are
rare for desk-scale vocabularies.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field
from functools import lru_cache

from .corpus import Dataset
from .errors import UsageError

_TOKEN_RE = re.compile(r"[0-9a-zA-Z]+")

DEFAULT_DIM = 1 << 15
DEFAULT_MAX_TOKENS = 150  # uniform sequence-length cap shared by all backends


@dataclass(frozen=True)
class FeaturizerConfig:
    dim: int = DEFAULT_DIM
    max_tokens: int = DEFAULT_MAX_TOKENS
    weighting: str = "tfidf"  # "raw-count" | "tfidf"
    lowercase: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dim < 2 or self.dim & (self.dim - 1):
            raise UsageError(f"feature dim must be a power of two >= 2, got {self.dim}")
        if self.max_tokens < 1:
            raise UsageError(f"max_tokens must be >= 1, got {self.max_tokens}")
        if self.weighting not in ("raw-count", "tfidf"):
            raise UsageError(f"unknown weighting {self.weighting!r}")

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "max_tokens": self.max_tokens,
            "weighting": self.weighting,
            "lowercase": self.lowercase,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeaturizerConfig":
        known = {"dim", "max_tokens", "weighting", "lowercase", "seed"}
        unknown = set(d) - known
        if unknown:
            raise UsageError(f"unknown featurizer config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class FeatureVector:
    """Sparse index -> weight map with a cached L2 norm."""

    entries: dict[int, float]
    norm: float = field(default=0.0)

    @classmethod
    def from_entries(cls, entries: dict[int, float]) -> "FeatureVector":
        norm = math.sqrt(sum(w * w for w in entries.values()))
        return cls(entries=entries, norm=norm)


@lru_cache(maxsize=1 << 18)
def _hash_index(token: str, seed: int, dim: int) -> int:
    key = seed.to_bytes(8, "little", signed=True)
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=key).digest()
    return int.from_bytes(digest, "little") & (dim - 1)


def tokenize(text: str, cfg: FeaturizerConfig) -> list[str]:
    """Split into maximal alphanumeric runs, capped at ``max_tokens``."""
    if cfg.lowercase:
        text = text.lower()
    return _TOKEN_RE.findall(text)[: cfg.max_tokens]


def featurize(text: str, cfg: FeaturizerConfig, idf: list[float] | None = None) -> FeatureVector:
    """Hash token counts into a FeatureVector, optionally idf-weighted."""
    if cfg.weighting == "tfidf" and idf is None:
        raise UsageError("tfidf weighting requires an idf table (run fit_idf first)")
    counts: dict[int, float] = {}
    for token in tokenize(text, cfg):
        idx = _hash_index(token, cfg.seed, cfg.dim)
        counts[idx] = counts.get(idx, 0.0) + 1.0
    if cfg.weighting == "tfidf":
        assert idf is not None
        counts = {idx: c * idf[idx] for idx, c in counts.items()}
    return FeatureVector.from_entries(counts)


def fit_idf(ds: Dataset, cfg: FeaturizerConfig) -> list[float]:
    """Smoothed inverse document frequency per hashed index.

    idf = ln((1 + m) / (1 + df)) + 1, with df = 0 for indices never seen.
    """
    df = [0] * cfg.dim
    for s in ds.samples:
        seen = {_hash_index(t, cfg.seed, cfg.dim) for t in tokenize(s.text, cfg)}
        for idx in seen:
            df[idx] += 1
    m = len(ds.samples)
    return [math.log((1 + m) / (1 + d)) + 1.0 for d in df]
