"""Raw item representations: trained subword genre vectors and text encoders.

Genre vectors (default 50-d) come from a from-scratch skip-gram trainer with
negative sampling over each item's genre list, composing each token from its
own vector plus hashed character n-gram vectors, so unseen genre tokens still
map to meaningful vectors. Text embeddings (default 768-d) come from pluggable
providers: a file-backed lookup over a precomputed embedding file, or a
deterministic feature-hashing fallback that needs no external model.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .binio import Reader, Writer, fnv1a64
from .errors import (
    CorruptFile,
    DegenerateCorpus,
    EmptyCorpus,
    EmptyGenreList,
    MissingEmbedding,
)

log = logging.getLogger(__name__)

GENRE_MAGIC = b"LFRGEN1\x00"
EMBEDDING_MAGIC = b"LFREMB1\x00"

TEXT_DIM = 768
GENRE_DIM = 50
MAX_TEXT_TOKENS = 128

# Word characters minus underscore; splits on whitespace and punctuation and
# keeps non-Latin scripts intact.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercased unigram tokens; the shared tokenizer for hashing and TF-IDF."""
    return _TOKEN_RE.findall(text.lower())


def char_ngrams(token: str, min_n: int = 3, max_n: int = 6) -> list[str]:
    """Distinct character n-grams of the token wrapped in boundary markers.

    Ordered by length then position; e.g. "war" -> <wa, war, ar>, <war, war>, <war>.
    """
    wrapped = f"<{token}>"
    seen: set[str] = set()
    out: list[str] = []
    for n in range(min_n, max_n + 1):
        for i in range(len(wrapped) - n + 1):
            gram = wrapped[i : i + n]
            if gram not in seen:
                seen.add(gram)
                out.append(gram)
    return out


def _bucket_ids(token: str, min_n: int, max_n: int, bucket_count: int) -> np.ndarray:
    ids = [
        fnv1a64(gram.encode("utf-8")) % bucket_count
        for gram in char_ngrams(token, min_n, max_n)
    ]
    return np.asarray(ids, dtype=np.int64)


@dataclass
class GenreTrainConfig:
    dim: int = GENRE_DIM
    window: int = 2
    negatives: int = 5
    epochs: int = 15
    lr: float = 0.05
    min_n: int = 3
    max_n: int = 6
    bucket_count: int = 1 << 17
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1 or self.window < 1 or self.epochs < 1:
            raise ValueError("dim, window and epochs must all be >= 1")
        if self.bucket_count < 1:
            raise ValueError("bucket_count must be >= 1")
        if not 1 <= self.min_n <= self.max_n:
            raise ValueError("need 1 <= min_n <= max_n")


@dataclass
class GenreEmbeddingModel:
    """Token vectors plus a hashed n-gram bucket table; immutable after training."""

    dim: int
    min_n: int
    max_n: int
    bucket_count: int
    seed: int
    token_vectors: dict[str, np.ndarray]
    ngram_buckets: np.ndarray  # (bucket_count, dim) float32

    def ngram_ids(self, token: str) -> np.ndarray:
        return _bucket_ids(token, self.min_n, self.max_n, self.bucket_count)


def train_genre_model(
    genre_sequences: list[list[str]], config: GenreTrainConfig | None = None
) -> GenreEmbeddingModel:
    """Skip-gram with negative sampling over genre lists treated as sentences.

    Center tokens are represented as the average of their own vector and their
    hashed n-gram vectors; gradients spread equally over the constituents.
    Bit-deterministic for a fixed seed (single-threaded, one RNG stream).
    """
    config = config or GenreTrainConfig()
    sequences = [[t for t in seq if t] for seq in genre_sequences]
    sequences = [seq for seq in sequences if seq]
    if not sequences:
        raise EmptyCorpus("no genre sequences to train on")

    vocab = sorted({t for seq in sequences for t in seq})
    if len(vocab) < 2:
        raise DegenerateCorpus(f"need at least 2 distinct genre tokens, got {len(vocab)}")
    tok2idx = {t: i for i, t in enumerate(vocab)}

    counts = np.zeros(len(vocab), dtype=np.float64)
    for seq in sequences:
        for t in seq:
            counts[tok2idx[t]] += 1
    noise = counts**0.75
    noise /= noise.sum()

    # (center, context) index pairs, in corpus order
    pairs: list[tuple[int, int]] = []
    for seq in sequences:
        idx = [tok2idx[t] for t in seq]
        for i, center in enumerate(idx):
            lo = max(0, i - config.window)
            hi = min(len(idx), i + config.window + 1)
            for j in range(lo, hi):
                if j != i:
                    pairs.append((center, idx[j]))
    if not pairs:
        raise DegenerateCorpus("no training pairs: every sequence has fewer than 2 tokens")

    rng = np.random.default_rng(config.seed)
    dim = config.dim
    bound = 0.5 / dim
    vec_in = rng.uniform(-bound, bound, size=(len(vocab), dim)).astype(np.float32)
    buckets = rng.uniform(-bound, bound, size=(config.bucket_count, dim)).astype(np.float32)
    vec_out = np.zeros((len(vocab), dim), dtype=np.float32)

    grams = [
        _bucket_ids(t, config.min_n, config.max_n, config.bucket_count) for t in vocab
    ]

    total = config.epochs * len(pairs)
    done = 0
    for _epoch in range(config.epochs):
        negatives = rng.choice(
            len(vocab), size=(len(pairs), config.negatives), p=noise
        )
        for pair_no, (center, context) in enumerate(pairs):
            alpha = max(config.lr * (1.0 - done / total), config.lr * 1e-4)
            done += 1
            ids = grams[center]
            denom = np.float32(1 + len(ids))
            h = (vec_in[center] + buckets[ids].sum(axis=0)) / denom

            targets = negatives[pair_no]
            targets = targets[targets != context]
            rows = np.concatenate(([context], targets))
            labels = np.zeros(len(rows), dtype=np.float32)
            labels[0] = 1.0

            outs = vec_out[rows]
            scores = 1.0 / (1.0 + np.exp(-outs @ h))
            g = (scores - labels) * np.float32(alpha)
            grad_h = g @ outs
            vec_out[rows] -= np.outer(g, h)
            spread = (grad_h / denom).astype(np.float32)
            vec_in[center] -= spread
            np.subtract.at(buckets, ids, spread)

    token_vectors = {t: vec_in[tok2idx[t]].copy() for t in vocab}
    return GenreEmbeddingModel(
        dim=dim,
        min_n=config.min_n,
        max_n=config.max_n,
        bucket_count=config.bucket_count,
        seed=config.seed,
        token_vectors=token_vectors,
        ngram_buckets=buckets,
    )


def embed_genre(model: GenreEmbeddingModel, token: str) -> np.ndarray:
    """Vector for one genre token; OOV tokens fall back to n-gram buckets alone."""
    if not token:
        raise EmptyGenreList("genre token must be non-empty")
    ids = model.ngram_ids(token)
    gram_vecs = model.ngram_buckets[ids]
    own = model.token_vectors.get(token)
    if own is not None:
        return (own + gram_vecs.sum(axis=0)) / np.float32(1 + len(ids))
    return gram_vecs.mean(axis=0)


def embed_genre_set(model: GenreEmbeddingModel, genres: list[str]) -> np.ndarray:
    """Arithmetic mean of per-token vectors; permutation invariant."""
    if not genres:
        raise EmptyGenreList("item has no genres to embed")
    acc = np.zeros(model.dim, dtype=np.float64)
    for token in genres:
        acc += embed_genre(model, token)
    return (acc / len(genres)).astype(np.float32)


def save_genre_model(model: GenreEmbeddingModel, path: str | Path) -> None:
    Path(path).write_bytes(genre_model_bytes(model))


def genre_model_bytes(model: GenreEmbeddingModel) -> bytes:
    w = Writer()
    w.raw(GENRE_MAGIC)
    w.u32(model.dim)
    w.u32(model.min_n)
    w.u32(model.max_n)
    w.u64(model.bucket_count)
    w.u64(len(model.token_vectors))
    for token, vec in model.token_vectors.items():
        w.string(token)
        w.f32_array(vec)
    w.f32_array(model.ngram_buckets)
    w.u64(model.seed)
    return w.getvalue()


def load_genre_model(path: str | Path) -> GenreEmbeddingModel:
    r = Reader(Path(path).read_bytes(), label=str(path))
    r.expect_magic(GENRE_MAGIC)
    dim = r.u32()
    min_n = r.u32()
    max_n = r.u32()
    bucket_count = r.u64()
    vocab_size = r.u64()
    token_vectors: dict[str, np.ndarray] = {}
    for _ in range(vocab_size):
        token = r.string()
        token_vectors[token] = r.f32_array(dim)
    buckets = r.f32_array(bucket_count * dim).reshape(bucket_count, dim)
    seed = r.u64()
    r.done()
    return GenreEmbeddingModel(
        dim=dim,
        min_n=min_n,
        max_n=max_n,
        bucket_count=bucket_count,
        seed=seed,
        token_vectors=token_vectors,
        ngram_buckets=buckets,
    )


@dataclass(frozen=True)
class TextEmbedding:
    vector: np.ndarray
    provider_id: str


class EncoderProvider:
    """Deterministic text encoder: same item always yields the same vector."""

    provider_id: str = "base"
    dim: int = TEXT_DIM

    def encode(self, item) -> np.ndarray:
        raise NotImplementedError


def encode_text(provider: EncoderProvider, item) -> TextEmbedding:
    return TextEmbedding(vector=provider.encode(item), provider_id=provider.provider_id)


def fallback_encode(description: str, dim: int = TEXT_DIM) -> np.ndarray:
    """Feature-hashed bag of token 1/2-grams, L2-normalized.

    Tokens beyond the first 128 are ignored (parity with the transformer
    provider's truncation). A degenerate all-zero vector maps to e_0 so the
    output always has unit norm.
    """
    tokens = tokenize(description)[:MAX_TEXT_TOKENS]
    feats = list(tokens)
    feats.extend(f"{a} {b}" for a, b in zip(tokens, tokens[1:]))
    vec = np.zeros(dim, dtype=np.float64)
    for feat in feats:
        h = fnv1a64(feat.encode("utf-8"))
        sign = 1.0 if h >> 63 else -1.0
        vec[h % dim] += sign
    norm = np.linalg.norm(vec)
    if norm < 1e-12:
        vec[:] = 0.0
        vec[0] = 1.0
        return vec.astype(np.float32)
    return (vec / norm).astype(np.float32)


class FallbackProvider(EncoderProvider):
    """Hashing encoder so the pipeline runs with no pretrained model on hand."""

    def __init__(self, dim: int = TEXT_DIM):
        self.dim = dim
        self.provider_id = "fallback"

    def encode(self, item) -> np.ndarray:
        return fallback_encode(item.description, self.dim)


class FileBackedProvider(EncoderProvider):
    """Looks up precomputed vectors from an embedding file keyed by item id."""

    def __init__(self, path: str | Path):
        data = Path(path).read_bytes()
        r = Reader(data, label=str(path))
        r.expect_magic(EMBEDDING_MAGIC)
        self.dim = r.u32()
        count = r.u64()
        self.vectors: dict[str, np.ndarray] = {}
        for _ in range(count):
            item_id = r.string()
            if item_id in self.vectors:
                raise CorruptFile(f"{path}: duplicate id {item_id!r}")
            self.vectors[item_id] = r.f32_array(self.dim)
        r.done()
        self.provider_id = f"file:{fnv1a64(data):016x}"

    def encode(self, item) -> np.ndarray:
        vec = self.vectors.get(item.id)
        if vec is None:
            raise MissingEmbedding(item.id)
        return vec


def write_embedding_file(
    path: str | Path, records: list[tuple[str, np.ndarray]], dim: int = TEXT_DIM
) -> None:
    """Write an embedding file in the format FileBackedProvider reads."""
    w = Writer()
    w.raw(EMBEDDING_MAGIC)
    w.u32(dim)
    w.u64(len(records))
    seen: set[str] = set()
    for item_id, vec in records:
        if item_id in seen:
            raise ValueError(f"duplicate id {item_id!r}")
        seen.add(item_id)
        if len(vec) != dim:
            raise ValueError(f"vector for {item_id!r} has length {len(vec)}, expected {dim}")
        w.string(item_id)
        w.f32_array(np.asarray(vec))
    Path(path).write_bytes(w.getvalue())
