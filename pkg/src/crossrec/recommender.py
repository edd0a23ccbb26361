"""Cold-start inference over a prebuilt feature index.

A query of 1-3 seed items from the source domain is collapsed into one set of
seed features (mean fused vector, mean genre vector, bag-of-words TF-IDF over
the concatenated descriptions), scored against every index row, and the top-K
targets are returned with per-signal score breakdowns.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import fusion
from .catalog import Catalog
from .embeddings import EncoderProvider, GenreEmbeddingModel, embed_genre_set
from .errors import EmptyInput, IncompatibleIndex, UnknownSeedId
from .index import FeatureIndex, verify_compatibility
from .scoring import (
    DEFAULT_WEIGHTS,
    ScoreBreakdown,
    SparseVector,
    TfidfModel,
    sparse_cosine,
    tfidf_transform,
    validate_weights,
)

log = logging.getLogger(__name__)

_NORM_FLOOR = 1e-12
SOFT_SEED_LIMIT = 3


@dataclass(frozen=True)
class ModelBundle:
    """Everything recommend() needs besides the index and the source catalog."""

    encoder: EncoderProvider
    genre_model: GenreEmbeddingModel
    params: fusion.FusionParameters
    tfidf_model: TfidfModel


@dataclass(frozen=True)
class SeedQuery:
    seed_ids: tuple[str, ...]
    k: int

    def __post_init__(self):
        if not self.seed_ids:
            raise ValueError("seed_ids must be non-empty")
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass(frozen=True)
class Recommendation:
    target_id: str
    rank: int
    breakdown: ScoreBreakdown


def combine_seed_features(features: list[np.ndarray]) -> np.ndarray:
    """Componentwise mean of the seed fused features."""
    if not features:
        raise EmptyInput("no seed features to combine")
    return np.mean(np.stack([np.asarray(f, dtype=np.float64) for f in features]), axis=0)


@dataclass(frozen=True)
class SeedFeatures:
    fused: np.ndarray  # (text_dim,) float64
    genre: np.ndarray  # (genre_dim,) float64
    tfidf: SparseVector
    raw_text: np.ndarray  # (text_dim,) float64 mean of raw encoder vectors


def build_seed_features(
    seed_ids: tuple[str, ...] | list[str],
    source_catalog: Catalog,
    models: ModelBundle,
) -> SeedFeatures:
    by_id = source_catalog.by_id()
    missing = [s for s in seed_ids if s not in by_id]
    if missing:
        raise UnknownSeedId(missing, domain="source")
    items = [by_id[s] for s in seed_ids]
    raw = [np.asarray(models.encoder.encode(item), dtype=np.float64) for item in items]
    genre_vecs = [
        np.asarray(embed_genre_set(models.genre_model, list(item.genres)), dtype=np.float64)
        for item in items
    ]
    fused_each = [
        fusion.forward(models.params, e_d, gv) for e_d, gv in zip(raw, genre_vecs)
    ]
    seed_tfidf = tfidf_transform(
        models.tfidf_model, " ".join(item.description for item in items)
    )
    return SeedFeatures(
        fused=combine_seed_features(fused_each),
        genre=np.mean(np.stack(genre_vecs), axis=0),
        tfidf=seed_tfidf,
        raw_text=np.mean(np.stack(raw), axis=0),
    )


def cosine_to_rows(query: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Cosine of one query vector against every matrix row; zero-norm rows or
    query score 0, matching the scalar cosine's guard."""
    rows64 = np.asarray(rows, dtype=np.float64)
    qn = float(np.linalg.norm(query))
    rn = np.linalg.norm(rows64, axis=1)
    if qn < _NORM_FLOOR:
        return np.zeros(rows64.shape[0])
    safe = np.where(rn < _NORM_FLOOR, 1.0, rn)
    sims = (rows64 @ query) / (safe * qn)
    sims[rn < _NORM_FLOOR] = 0.0
    return np.clip(sims, -1.0, 1.0)


def score_index(
    seed: SeedFeatures, index: FeatureIndex, weights=DEFAULT_WEIGHTS
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """All three similarity arrays plus their weighted combination, one entry
    per index row in index order."""
    w1, w2, w3 = validate_weights(weights)
    fusion_sims = cosine_to_rows(seed.fused, index.fused)
    genre_sims = cosine_to_rows(seed.genre, index.genre)
    tfidf_sims = np.array(
        [sparse_cosine(seed.tfidf, row) for row in index.tfidf_rows], dtype=np.float64
    )
    combined = w1 * fusion_sims + w2 * genre_sims + w3 * tfidf_sims
    return fusion_sims, genre_sims, tfidf_sims, combined


def rank_order(combined: np.ndarray, item_ids: list[str]) -> list[int]:
    """Indices sorted by combined score descending, ties by target id ascending."""
    return sorted(range(len(item_ids)), key=lambda i: (-combined[i], item_ids[i]))


def recommend(
    query: SeedQuery,
    source_catalog: Catalog,
    index: FeatureIndex,
    models: ModelBundle,
    weights=DEFAULT_WEIGHTS,
) -> list[Recommendation]:
    ws = validate_weights(weights)
    if not verify_compatibility(index, models.params, models.tfidf_model):
        raise IncompatibleIndex(
            "index fingerprints do not match the supplied fusion/tfidf artifacts"
        )
    if index.provider_id != models.encoder.provider_id:
        raise IncompatibleIndex(
            f"index was built with text provider {index.provider_id!r}, "
            f"but got {models.encoder.provider_id!r}"
        )
    if len(query.seed_ids) > SOFT_SEED_LIMIT:
        log.warning(
            "%d seed items given; quality is characterized for 1-%d",
            len(query.seed_ids),
            SOFT_SEED_LIMIT,
        )

    seed = build_seed_features(query.seed_ids, source_catalog, models)
    fusion_sims, genre_sims, tfidf_sims, combined = score_index(seed, index, ws)

    k = query.k
    if k > len(index):
        log.warning("k=%d exceeds index size %d; returning all items", k, len(index))
        k = len(index)

    order = rank_order(combined, index.item_ids)[:k]
    out = []
    for rank, i in enumerate(order, start=1):
        out.append(
            Recommendation(
                target_id=index.item_ids[i],
                rank=rank,
                breakdown=ScoreBreakdown(
                    fusion_sim=float(fusion_sims[i]),
                    genre_sim=float(genre_sims[i]),
                    tfidf_sim=float(tfidf_sims[i]),
                    combined=float(combined[i]),
                ),
            )
        )
    return out


def explain(recommendation: Recommendation) -> ScoreBreakdown:
    return recommendation.breakdown
