"""Similarity signals and score combination.

Three signals feed every recommendation: cosine over fused features, cosine
over raw genre-set vectors, and cosine over TF-IDF description vectors. The
final score is a fixed convex combination of the three.
"""

from __future__ import annotations

import logging
import math
import struct
import weakref
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .binio import Writer, fnv1a64
from .embeddings import tokenize
from .errors import EmptyCorpus, InvalidWeights, ShapeMismatch

log = logging.getLogger(__name__)

DEFAULT_WEIGHTS = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)

_NORM_FLOOR = 1e-12
_WEIGHT_SUM_TOL = 1e-9


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; near-zero-norm inputs score 0 rather than erroring."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"cosine inputs differ in shape: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na < _NORM_FLOOR or nb < _NORM_FLOOR:
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


@dataclass(frozen=True, eq=False)
class SparseVector:
    """(index, weight) pairs with strictly increasing indices."""

    indices: np.ndarray  # uint32
    values: np.ndarray

    @property
    def nnz(self) -> int:
        return int(self.indices.shape[0])


EMPTY_SPARSE = SparseVector(
    indices=np.empty(0, dtype=np.uint32), values=np.empty(0, dtype=np.float64)
)


def sparse_equal(a: SparseVector, b: SparseVector) -> bool:
    return np.array_equal(a.indices, b.indices) and np.array_equal(a.values, b.values)


def sparse_cosine(a: SparseVector, b: SparseVector) -> float:
    if a.nnz == 0 or b.nnz == 0:
        return 0.0
    common, ia, ib = np.intersect1d(
        a.indices, b.indices, assume_unique=True, return_indices=True
    )
    if common.size == 0:
        return 0.0
    dot = float(np.asarray(a.values, dtype=np.float64)[ia]
                @ np.asarray(b.values, dtype=np.float64)[ib])
    na = float(np.linalg.norm(np.asarray(a.values, dtype=np.float64)))
    nb = float(np.linalg.norm(np.asarray(b.values, dtype=np.float64)))
    if na < _NORM_FLOOR or nb < _NORM_FLOOR:
        return 0.0
    return float(np.clip(dot / (na * nb), -1.0, 1.0))


@dataclass(frozen=True, eq=False)
class TfidfModel:
    vocabulary: dict[str, int]  # term -> dense column index
    idf: np.ndarray  # float64, aligned with column indices
    doc_count: int


def tfidf_fit(corpus: list[str]) -> TfidfModel:
    """Fit smooth-idf weights: idf(t) = ln((1+N)/(1+df(t))) + 1.

    Tokenization matches the fallback text encoder so both views of a
    description agree on what a term is.
    """
    if not corpus:
        raise EmptyCorpus("tfidf_fit requires at least one document")
    n = len(corpus)
    df: Counter[str] = Counter()
    for text in corpus:
        df.update(set(tokenize(text)))
    terms = sorted(df)
    vocabulary = {t: i for i, t in enumerate(terms)}
    idf = np.array(
        [math.log((1.0 + n) / (1.0 + df[t])) + 1.0 for t in terms], dtype=np.float64
    )
    if not terms:
        log.warning("tfidf corpus produced an empty vocabulary; all rows will be empty")
    return TfidfModel(vocabulary=vocabulary, idf=idf, doc_count=n)


def tfidf_transform(model: TfidfModel, text: str) -> SparseVector:
    """Raw term count x idf, L2-normalized. Unknown terms are dropped."""
    counts = Counter(t for t in tokenize(text) if t in model.vocabulary)
    if not counts:
        return EMPTY_SPARSE
    cols = np.array(sorted(model.vocabulary[t] for t in counts), dtype=np.uint32)
    col2term = {model.vocabulary[t]: t for t in counts}
    values = np.array(
        [counts[col2term[int(c)]] * model.idf[int(c)] for c in cols], dtype=np.float64
    )
    values /= np.linalg.norm(values)
    return SparseVector(indices=cols, values=values)


def tfidf_model_bytes(model: TfidfModel) -> bytes:
    """Canonical serialization used only for fingerprinting."""
    w = Writer()
    w.u64(model.doc_count)
    w.u64(len(model.vocabulary))
    for term in sorted(model.vocabulary, key=model.vocabulary.__getitem__):
        w.string(term)
        w.raw(struct.pack("<d", float(model.idf[model.vocabulary[term]])))
    return w.getvalue()


_fingerprint_cache: "weakref.WeakKeyDictionary[TfidfModel, int]" = weakref.WeakKeyDictionary()


def tfidf_fingerprint(model: TfidfModel) -> int:
    # model is immutable after fit, so the hash is computed at most once
    cached = _fingerprint_cache.get(model)
    if cached is None:
        cached = fnv1a64(tfidf_model_bytes(model))
        _fingerprint_cache[model] = cached
    return cached


@dataclass(frozen=True)
class ScoreBreakdown:
    fusion_sim: float
    genre_sim: float
    tfidf_sim: float
    combined: float

    def to_dict(self) -> dict:
        return {
            "fusion_sim": self.fusion_sim,
            "genre_sim": self.genre_sim,
            "tfidf_sim": self.tfidf_sim,
            "combined": self.combined,
        }


def validate_weights(weights) -> tuple[float, float, float]:
    ws = tuple(float(x) for x in weights)
    if len(ws) != 3:
        raise InvalidWeights(f"need exactly 3 weights, got {len(ws)}")
    if any(not math.isfinite(x) or x < 0 for x in ws):
        raise InvalidWeights(f"weights must be finite and non-negative: {ws}")
    if abs(sum(ws) - 1.0) > _WEIGHT_SUM_TOL:
        raise InvalidWeights(f"weights must sum to 1, got {sum(ws)!r}")
    return ws


def combined_score(
    fusion_sim: float,
    genre_sim: float,
    tfidf_sim: float,
    weights=DEFAULT_WEIGHTS,
) -> ScoreBreakdown:
    w1, w2, w3 = validate_weights(weights)
    combined = w1 * fusion_sim + w2 * genre_sim + w3 * tfidf_sim
    return ScoreBreakdown(
        fusion_sim=float(fusion_sim),
        genre_sim=float(genre_sim),
        tfidf_sim=float(tfidf_sim),
        combined=float(combined),
    )
