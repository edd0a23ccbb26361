"""Similarity primitives, TF-IDF model and score combination."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crossrec.embeddings import tokenize
from crossrec.errors import EmptyCorpus, InvalidWeights, ShapeMismatch
from crossrec.scoring import (
    DEFAULT_WEIGHTS,
    EMPTY_SPARSE,
    ScoreBreakdown,
    SparseVector,
    combined_score,
    cosine,
    sparse_cosine,
    sparse_equal,
    tfidf_fingerprint,
    tfidf_fit,
    tfidf_model_bytes,
    tfidf_transform,
    validate_weights,
)

# --- dense cosine ---


def test_cosine_basics():
    v = np.array([0.3, -0.2, 0.9])
    assert cosine(v, v) == pytest.approx(1.0, abs=1e-12)
    assert cosine(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(0.0, abs=1e-12)
    assert cosine(np.array([1.0, 1.0]), np.array([1.0, 0.0])) == pytest.approx(
        1.0 / math.sqrt(2), abs=1e-9
    )
    assert cosine(v, -v) == pytest.approx(-1.0, abs=1e-12)


def test_cosine_zero_vector_scores_zero():
    assert cosine(np.zeros(3), np.ones(3)) == 0.0
    assert cosine(np.ones(3), np.zeros(3)) == 0.0


def test_cosine_scale_invariant():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(2, 10))
    assert cosine(a * 37.5, b) == pytest.approx(cosine(a, b), abs=1e-12)


def test_cosine_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        cosine(np.ones(3), np.ones(4))


def test_cosine_stays_in_range():
    # near-parallel vectors can push naive division past 1.0
    a = np.full(800, 0.1)
    assert cosine(a, a * (1 + 1e-16)) <= 1.0


# --- sparse vectors ---


def _sv(pairs):
    idx = np.array([i for i, _ in pairs], dtype=np.uint32)
    val = np.array([v for _, v in pairs], dtype=np.float32)
    return SparseVector(indices=idx, values=val)


def test_sparse_cosine_hand_example():
    a = _sv([(0, 1.0), (2, 2.0)])
    b = _sv([(2, 1.0), (5, 3.0)])
    # dot = 2, |a| = sqrt(5), |b| = sqrt(10)
    assert sparse_cosine(a, b) == pytest.approx(2 / math.sqrt(50), abs=1e-7)


def test_sparse_cosine_disjoint_and_empty():
    a = _sv([(0, 1.0)])
    b = _sv([(1, 1.0)])
    assert sparse_cosine(a, b) == 0.0
    assert sparse_cosine(a, EMPTY_SPARSE) == 0.0
    assert sparse_cosine(EMPTY_SPARSE, EMPTY_SPARSE) == 0.0


def test_sparse_cosine_self_is_one():
    a = _sv([(1, 0.5), (4, 0.25), (9, 1.5)])
    assert sparse_cosine(a, a) == pytest.approx(1.0, abs=1e-6)


def test_sparse_equal():
    a = _sv([(1, 0.5)])
    assert sparse_equal(a, _sv([(1, 0.5)]))
    assert not sparse_equal(a, _sv([(2, 0.5)]))
    assert not sparse_equal(a, EMPTY_SPARSE)


# --- TF-IDF ---


def test_tfidf_hand_example():
    model = tfidf_fit(["a b", "a c"])
    ia = model.idf[model.vocabulary["a"]]
    ib = model.idf[model.vocabulary["b"]]
    # smooth idf: ln((1+N)/(1+df)) + 1
    assert ia == pytest.approx(1.0, abs=1e-12)
    assert ib == pytest.approx(math.log(3 / 2) + 1, abs=1e-12)
    assert ib == pytest.approx(1.40546, abs=1e-5)

    vec = tfidf_transform(model, "a b")
    dense = np.zeros(len(model.vocabulary))
    dense[vec.indices] = vec.values
    expected = np.array([1.0, ib, 0.0])
    expected /= np.linalg.norm(expected)
    np.testing.assert_allclose(dense, expected, atol=1e-6)
    np.testing.assert_allclose(
        sorted(vec.values.tolist()), [0.57974, 0.81480], atol=1e-5
    )


def _dense_tfidf_oracle(corpus, queries):
    """Independent dense implementation: counts matrix, smooth idf, L2 rows."""
    vocab = sorted({t for doc in corpus for t in set(tokenize(doc))})
    col = {t: j for j, t in enumerate(vocab)}
    n = len(corpus)
    df = np.zeros(len(vocab))
    for doc in corpus:
        for t in set(tokenize(doc)):
            df[col[t]] += 1
    idf = np.log((1 + n) / (1 + df)) + 1
    out = []
    for q in queries:
        row = np.zeros(len(vocab))
        for t in tokenize(q):
            if t in col:
                row[col[t]] += 1
        row *= idf
        norm = np.linalg.norm(row)
        out.append(row / norm if norm > 0 else row)
    return vocab, idf, np.array(out)


def test_tfidf_matches_dense_oracle():
    rng = np.random.default_rng(17)
    words = [f"w{k}" for k in range(30)]
    corpus = [
        " ".join(rng.choice(words, size=int(rng.integers(1, 12)))) for _ in range(60)
    ]
    model = tfidf_fit(corpus)
    vocab, idf, dense_rows = _dense_tfidf_oracle(corpus, corpus)
    assert sorted(model.vocabulary) == vocab
    for term, j in model.vocabulary.items():
        assert model.idf[j] == pytest.approx(idf[vocab.index(term)], abs=1e-12)
    for doc, expected in zip(corpus, dense_rows):
        vec = tfidf_transform(model, doc)
        dense = np.zeros(len(vocab))
        for i, v in zip(vec.indices, vec.values):
            dense[i] = v
        np.testing.assert_allclose(dense, expected, atol=1e-7)  # stored f32


def test_tfidf_unknown_terms_dropped():
    model = tfidf_fit(["alpha beta", "alpha gamma"])
    vec = tfidf_transform(model, "delta epsilon")
    assert vec.nnz == 0
    mixed = tfidf_transform(model, "alpha delta")
    assert mixed.nnz == 1


def test_tfidf_empty_inputs():
    with pytest.raises(EmptyCorpus):
        tfidf_fit([])
    model = tfidf_fit(["alpha beta"])
    assert tfidf_transform(model, "").nnz == 0


def test_tfidf_transform_rows_unit_norm():
    model = tfidf_fit(["x y z", "x q", "y q r"])
    for doc in ("x y", "q r x", "z"):
        vec = tfidf_transform(model, doc)
        assert float(np.linalg.norm(vec.values.astype(np.float64))) == pytest.approx(1.0, abs=1e-6)


def test_tfidf_indices_strictly_increasing():
    model = tfidf_fit(["c b a", "a d e f"])
    vec = tfidf_transform(model, "f a c b")
    assert (np.diff(vec.indices.astype(np.int64)) > 0).all()


def test_tfidf_fingerprint_stable_and_content_addressed():
    a = tfidf_fit(["a b", "a c"])
    b = tfidf_fit(["a b", "a c"])
    assert tfidf_fingerprint(a) == tfidf_fingerprint(b)
    assert tfidf_model_bytes(a) == tfidf_model_bytes(b)
    c = tfidf_fit(["a b", "a d"])
    assert tfidf_fingerprint(a) != tfidf_fingerprint(c)
    # cached path returns the same value
    assert tfidf_fingerprint(a) == tfidf_fingerprint(a)


# --- combined scores ---


def test_combined_equal_weights_is_mean():
    assert combined_score(0.9, 0.6, 0.3, DEFAULT_WEIGHTS).combined == pytest.approx(0.6, abs=1e-12)


def test_combined_degenerate_weights_select_one_signal():
    assert combined_score(0.9, 0.6, 0.3, (1.0, 0.0, 0.0)).combined == pytest.approx(0.9, abs=1e-12)
    assert combined_score(0.9, 0.6, 0.3, (0.0, 1.0, 0.0)).combined == pytest.approx(0.6, abs=1e-12)
    assert combined_score(0.9, 0.6, 0.3, (0.0, 0.0, 1.0)).combined == pytest.approx(0.3, abs=1e-12)


def test_combined_constant_when_sims_equal():
    for w in (DEFAULT_WEIGHTS, (0.2, 0.5, 0.3)):
        assert combined_score(0.44, 0.44, 0.44, w).combined == pytest.approx(0.44, abs=1e-12)


def test_validate_weights():
    assert validate_weights((0.2, 0.5, 0.3)) == (0.2, 0.5, 0.3)
    with pytest.raises(InvalidWeights):
        validate_weights((0.5, 0.5))
    with pytest.raises(InvalidWeights):
        validate_weights((0.5, 0.6, 0.1))
    with pytest.raises(InvalidWeights):
        validate_weights((-0.1, 0.6, 0.5))
    with pytest.raises(InvalidWeights):
        validate_weights((float("nan"), 0.5, 0.5))


def test_weight_sum_tolerance():
    w = (1 / 3, 1 / 3, 1 / 3)  # sums to 1 within fp error
    validate_weights(w)


@settings(max_examples=40)
@given(
    st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1),
    st.floats(0, 1), st.floats(0, 1),
)
def test_combined_monotone_in_each_signal(f, g, t, w1_raw, w2_raw):
    # normalize a random weight triple
    w3_raw = 0.5
    total = w1_raw + w2_raw + w3_raw
    w = (w1_raw / total, w2_raw / total, w3_raw / total)
    base = combined_score(f, g, t, w).combined
    assert combined_score(min(f + 0.1, 1.0), g, t, w).combined >= base - 1e-12


def test_breakdown_to_dict():
    b = ScoreBreakdown(fusion_sim=0.5, genre_sim=0.25, tfidf_sim=0.75, combined=0.5)
    d = b.to_dict()
    assert set(d) == {"fusion_sim", "genre_sim", "tfidf_sim", "combined"}
    assert d["combined"] == 0.5
