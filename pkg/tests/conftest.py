"""Shared fixtures: one small planted dataset with artifacts trained once per session.

The mini dataset (8 items per cluster) keeps unit tests fast; the acceptance
suite builds its own full-scale dataset.
"""

import pytest

import synthdata
from crossrec.catalog import Catalog
from crossrec.embeddings import FallbackProvider, GenreTrainConfig, train_genre_model
from crossrec.index import build_index
from crossrec.recommender import ModelBundle
from crossrec.scoring import tfidf_fit
from crossrec.trainer import PairSamplingConfig, TrainConfig, sample_pairs, train

MINI_PER_CLUSTER = 8


@pytest.fixture(scope="session")
def mini_data():
    source = Catalog(items=synthdata.build_items("source", per_cluster=MINI_PER_CLUSTER, seed=7))
    target = Catalog(items=synthdata.build_items("target", per_cluster=MINI_PER_CLUSTER, seed=7))
    ratings = synthdata.build_ratings(
        source.items,
        target.items,
        users_per_cluster=3,
        liked_sources=2,
        liked_core_targets=3,
        liked_peripheral_targets=2,
        per_cluster=MINI_PER_CLUSTER,
        seed=7,
    )
    return source, target, ratings


@pytest.fixture(scope="session")
def mini_genre_model(mini_data):
    source, target, _ = mini_data
    sequences = [list(i.genres) for i in source.items + target.items]
    return train_genre_model(sequences, GenreTrainConfig(seed=7))


@pytest.fixture(scope="session")
def mini_bundle(mini_data, mini_genre_model):
    source, target, ratings = mini_data
    encoder = FallbackProvider()
    pairs = sample_pairs(
        source.items,
        target.items,
        ratings,
        PairSamplingConfig(max_positives=400, seed=7),
    )
    params, report = train(
        source.items, target.items, encoder, mini_genre_model, pairs,
        TrainConfig(epochs=2, seed=7),
    )
    tfidf_model = tfidf_fit([item.description for item in target.items])
    return ModelBundle(
        encoder=encoder, genre_model=mini_genre_model, params=params, tfidf_model=tfidf_model
    ), report


@pytest.fixture(scope="session")
def mini_index(mini_data, mini_bundle):
    _, target, _ = mini_data
    models, _ = mini_bundle
    return build_index(target, models.encoder, models.genre_model, models.params, models.tfidf_model)
