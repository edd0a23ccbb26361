"""Precomputed target-domain feature index.

Stores, per target item: the fused 768-d feature row, the 50-d genre-set
vector, and the sparse TF-IDF row, along with fingerprints of the fusion
checkpoint and TF-IDF model used to build it. The fingerprints block an index
from being served against a retrained model.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fusion
from .binio import Reader, Writer
from .catalog import Catalog, Item
from .embeddings import EncoderProvider, GenreEmbeddingModel, embed_genre_set
from .errors import CorruptFile, CorruptIndex, EmptyInput, MissingEmbedding
from .scoring import SparseVector, TfidfModel, tfidf_fingerprint, tfidf_transform

INDEX_MAGIC = b"LFRIDX1\x00"
INDEX_VERSION = 1

_SPARSE_DTYPE = np.dtype([("index", "<u4"), ("weight", "<f4")])


@dataclass
class IndexBuildConfig:
    batch_size: int = 32
    parallelism: int = 1

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")


@dataclass
class FeatureIndex:
    item_ids: list[str]
    fused: np.ndarray  # (n, text_dim) float32
    genre: np.ndarray  # (n, genre_dim) float32
    tfidf_rows: list[SparseVector] = field(repr=False, default_factory=list)
    provider_id: str = ""
    model_fingerprint: int = 0
    tfidf_fingerprint: int = 0

    def __post_init__(self):
        n = len(self.item_ids)
        if self.fused.shape[0] != n or self.genre.shape[0] != n:
            raise ValueError("matrix row counts must equal len(item_ids)")
        if len(self.tfidf_rows) != n:
            raise ValueError("tfidf row count must equal len(item_ids)")
        if len(set(self.item_ids)) != n:
            raise ValueError("item ids must be unique")

    def __len__(self) -> int:
        return len(self.item_ids)

    @property
    def text_dim(self) -> int:
        return int(self.fused.shape[1])

    @property
    def genre_dim(self) -> int:
        return int(self.genre.shape[1])


def _batch_rows(
    items: list[Item],
    encoder: EncoderProvider,
    genre_model: GenreEmbeddingModel,
    params: fusion.FusionParameters,
    tfidf_model: TfidfModel,
) -> tuple[np.ndarray, np.ndarray, list[SparseVector], list[str]]:
    text_rows = []
    genre_rows = []
    missing: list[str] = []
    for item in items:
        try:
            text_rows.append(np.asarray(encoder.encode(item), dtype=np.float64))
        except MissingEmbedding:
            missing.append(item.id)
            continue
        genre_rows.append(
            np.asarray(embed_genre_set(genre_model, list(item.genres)), dtype=np.float64)
        )
    if missing:
        return np.empty(0), np.empty(0), [], missing
    e_d = np.stack(text_rows)
    gv = np.stack(genre_rows)
    fused = fusion.forward(params, e_d, gv).astype("<f4")
    sparse = []
    for item in items:
        row = tfidf_transform(tfidf_model, item.description)
        sparse.append(
            SparseVector(indices=row.indices, values=row.values.astype("<f4"))
        )
    return fused, gv.astype("<f4"), sparse, missing


def build_index(
    target_catalog: Catalog,
    encoder: EncoderProvider,
    genre_model: GenreEmbeddingModel,
    params: fusion.FusionParameters,
    tfidf_model: TfidfModel,
    config: IndexBuildConfig | None = None,
) -> FeatureIndex:
    """Compute all rows in catalog order. Batches may run concurrently but each
    writes to a preassigned row range, so parallelism never changes the output."""
    config = config or IndexBuildConfig()
    items = target_catalog.items
    n = len(items)
    if n == 0:
        raise EmptyInput("cannot index an empty catalog")

    fused = np.empty((n, params.text_dim), dtype="<f4")
    genre = np.empty((n, genre_model.dim), dtype="<f4")
    tfidf_rows: list[SparseVector | None] = [None] * n
    starts = list(range(0, n, config.batch_size))
    missing_by_batch: dict[int, list[str]] = {}

    def run(start: int) -> None:
        chunk = items[start : start + config.batch_size]
        f, g, s, missing = _batch_rows(chunk, encoder, genre_model, params, tfidf_model)
        if missing:
            missing_by_batch[start] = missing
            return
        fused[start : start + len(chunk)] = f
        genre[start : start + len(chunk)] = g
        tfidf_rows[start : start + len(chunk)] = s

    if config.parallelism == 1:
        for start in starts:
            run(start)
    else:
        with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            list(pool.map(run, starts))

    if missing_by_batch:
        missing = [mid for start in sorted(missing_by_batch) for mid in missing_by_batch[start]]
        raise MissingEmbedding(missing)

    return FeatureIndex(
        item_ids=[item.id for item in items],
        fused=fused,
        genre=genre,
        tfidf_rows=tfidf_rows,
        provider_id=encoder.provider_id,
        model_fingerprint=fusion.params_fingerprint(params),
        tfidf_fingerprint=tfidf_fingerprint(tfidf_model),
    )


def index_bytes(index: FeatureIndex) -> bytes:
    w = Writer()
    w.raw(INDEX_MAGIC)
    w.u8(INDEX_VERSION)
    w.u32(index.text_dim)
    w.u32(index.genre_dim)
    w.u64(len(index))
    w.u64(index.model_fingerprint)
    w.u64(index.tfidf_fingerprint)
    w.string(index.provider_id)
    for item_id in index.item_ids:
        w.string(item_id)
    w.f32_array(index.fused)
    w.f32_array(index.genre)
    for row in index.tfidf_rows:
        w.u32(row.nnz)
        packed = np.empty(row.nnz, dtype=_SPARSE_DTYPE)
        packed["index"] = row.indices
        packed["weight"] = row.values
        w.raw(packed.tobytes())
    return w.getvalue()


def save_index(index: FeatureIndex, path: str | Path) -> None:
    Path(path).write_bytes(index_bytes(index))


def load_index(path: str | Path) -> FeatureIndex:
    data = Path(path).read_bytes()
    try:
        r = Reader(data, label=str(path))
        r.expect_magic(INDEX_MAGIC)
        version = r.u8()
        if version != INDEX_VERSION:
            raise CorruptIndex(f"{path}: unsupported index version {version}")
        text_dim = r.u32()
        genre_dim = r.u32()
        n = r.u64()
        model_fp = r.u64()
        tfidf_fp = r.u64()
        provider_id = r.string()
        item_ids = [r.string() for _ in range(n)]
        fused = r.f32_array(n * text_dim).reshape(n, text_dim)
        genre = r.f32_array(n * genre_dim).reshape(n, genre_dim)
        tfidf_rows = []
        for _ in range(n):
            nnz = r.u32()
            packed = np.frombuffer(r.take(nnz * 8), dtype=_SPARSE_DTYPE)
            indices = packed["index"].copy()
            if nnz and not (np.diff(indices.astype(np.int64)) > 0).all():
                raise CorruptIndex(f"{path}: sparse row indices not strictly increasing")
            tfidf_rows.append(
                SparseVector(indices=indices, values=packed["weight"].copy())
            )
        r.done()
        index = FeatureIndex(
            item_ids=item_ids,
            fused=fused,
            genre=genre,
            tfidf_rows=tfidf_rows,
            provider_id=provider_id,
            model_fingerprint=model_fp,
            tfidf_fingerprint=tfidf_fp,
        )
    except CorruptIndex:
        raise
    except (CorruptFile, ValueError) as exc:
        raise CorruptIndex(str(exc)) from None
    return index


def verify_compatibility(
    index: FeatureIndex, params: fusion.FusionParameters, tfidf_model: TfidfModel
) -> bool:
    return (
        index.model_fingerprint == fusion.params_fingerprint(params)
        and index.tfidf_fingerprint == tfidf_fingerprint(tfidf_model)
    )
