"""Cross-domain content recommendations from fused text and genre features."""

__version__ = "0.1.0"

from .catalog import Catalog, Item, Rating, clean, load_catalog, load_ratings
from .embeddings import (
    FallbackProvider,
    FileBackedProvider,
    GenreTrainConfig,
    embed_genre,
    embed_genre_set,
    load_genre_model,
    save_genre_model,
    train_genre_model,
)
from .errors import CrossRecError
from .fusion import FusionParameters, forward, init_params, load_params, save_params
from .index import FeatureIndex, build_index, load_index, save_index
from .recommender import ModelBundle, Recommendation, SeedQuery, recommend
from .scoring import ScoreBreakdown, combined_score, cosine, tfidf_fit, tfidf_transform
from .trainer import TrainConfig, TrainingPair, sample_pairs, train

__all__ = [
    "Catalog",
    "CrossRecError",
    "FallbackProvider",
    "FeatureIndex",
    "FileBackedProvider",
    "FusionParameters",
    "GenreTrainConfig",
    "Item",
    "ModelBundle",
    "Rating",
    "Recommendation",
    "ScoreBreakdown",
    "SeedQuery",
    "TrainConfig",
    "TrainingPair",
    "build_index",
    "clean",
    "combined_score",
    "cosine",
    "embed_genre",
    "embed_genre_set",
    "forward",
    "init_params",
    "load_catalog",
    "load_genre_model",
    "load_index",
    "load_params",
    "load_ratings",
    "recommend",
    "sample_pairs",
    "save_genre_model",
    "save_index",
    "save_params",
    "tfidf_fit",
    "tfidf_transform",
    "train",
    "train_genre_model",
]
