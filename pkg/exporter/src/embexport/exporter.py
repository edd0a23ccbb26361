"""Encode catalog descriptions with a pretrained transformer and write the
binary embedding file the recommendation engine consumes.

One record per catalog item: the final-layer hidden state at the [CLS]
position, 768 floats. Inference runs in eval mode under no_grad, and vectors
are cached by token-id sequence, so identical descriptions (and descriptions
that only differ past the truncation point) come out bitwise identical and a
re-export reproduces the file byte for byte.
"""

import json
import logging
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

MAGIC = b"LFREMB1\x00"
EXPECTED_DIM = 768
MAX_TOKENS = 128
DEFAULT_MODEL = "distilbert-base-uncased"

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


class ExportError(Exception):
    """Base class for exporter failures."""


class DuplicateId(ExportError):
    pass


class ModelLoadError(ExportError):
    pass


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


@dataclass(frozen=True)
class ExportManifest:
    """Provenance sidecar for one embedding file."""

    model_name: str
    count: int
    dim: int
    checksum: str  # fnv1a64 of the file bytes, 0x-prefixed hex
    tokenizer: str
    transformers_version: str
    max_tokens: int = MAX_TOKENS
    pooling: str = "cls"

    def __post_init__(self):
        if self.max_tokens != MAX_TOKENS:
            raise ValueError(f"max_tokens is fixed at {MAX_TOKENS}, got {self.max_tokens}")
        if self.pooling != "cls":
            raise ValueError(f"pooling is fixed at 'cls', got {self.pooling!r}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def read_catalog(path) -> list[tuple[str, str]]:
    """Read (id, description) pairs from a catalog JSONL file.

    Extra fields are ignored; duplicate ids are an error because the engine's
    reader keys vectors by id.
    """
    pairs: list[tuple[str, str]] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ExportError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict) or "id" not in obj or "description" not in obj:
                raise ExportError(f"{path}:{lineno}: need 'id' and 'description' fields")
            item_id = str(obj["id"])
            if item_id in seen:
                raise DuplicateId(f"{path}:{lineno}: duplicate id {item_id!r}")
            seen.add(item_id)
            pairs.append((item_id, str(obj["description"])))
    if not pairs:
        raise ExportError(f"{path}: no items")
    return pairs


def _load_encoder(model_name: str):
    try:
        from transformers import AutoModel, AutoTokenizer

        tokenizer = AutoTokenizer.from_pretrained(model_name)
        model = AutoModel.from_pretrained(model_name)
    except ExportError:
        raise
    except Exception as exc:
        raise ModelLoadError(
            f"could not load {model_name!r}: {exc}\n"
            f"Pass --model with a local checkpoint directory, or pre-download the\n"
            f"weights on a machine with network access (for example\n"
            f"`hf download {model_name}`) and point --model at the result."
        ) from exc
    model.eval()  # no dropout: repeated exports must be identical
    return tokenizer, model


def _encode_unique(tokenizer, model, token_lists, batch_size: int):
    """Run unique token-id sequences through the encoder in fixed batches.

    Returns {token-id tuple: 768-d float32 row}. Batch composition is a pure
    function of catalog order, so output bytes are stable across runs.
    """
    import torch

    pad_id = tokenizer.pad_token_id
    if pad_id is None:
        pad_id = 0
    cache = {}
    order = []
    for ids in token_lists:
        key = tuple(ids)
        if key not in cache:
            cache[key] = None
            order.append(key)
    with torch.no_grad():
        for start in range(0, len(order), batch_size):
            batch = order[start : start + batch_size]
            width = max(len(k) for k in batch)
            input_ids = torch.full((len(batch), width), pad_id, dtype=torch.long)
            mask = torch.zeros((len(batch), width), dtype=torch.long)
            for row, key in enumerate(batch):
                input_ids[row, : len(key)] = torch.tensor(key, dtype=torch.long)
                mask[row, : len(key)] = 1
            out = model(input_ids=input_ids, attention_mask=mask)
            cls = out.last_hidden_state[:, 0, :].to(torch.float32).cpu().numpy()
            for row, key in enumerate(batch):
                cache[key] = cls[row].copy()
    return cache


def _serialize(dim: int, rows) -> bytes:
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<I", dim)
    buf += struct.pack("<Q", len(rows))
    for item_id, vec in rows:
        raw = item_id.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ExportError(f"id too long to serialize: {item_id[:40]!r}...")
        buf += struct.pack("<H", len(raw))
        buf += raw
        buf += np.ascontiguousarray(vec, dtype="<f4").tobytes()
    return bytes(buf)


def export_embeddings(
    catalog_path,
    out_path,
    batch_size: int = 32,
    model_name: str = DEFAULT_MODEL,
) -> ExportManifest:
    """Encode every catalog description and write the embedding file.

    The manifest is returned and also written next to the output as
    `<out>.manifest.json`.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    pairs = read_catalog(catalog_path)
    tokenizer, model = _load_encoder(model_name)
    dim = int(getattr(model.config, "hidden_size"))
    if dim != EXPECTED_DIM:
        raise ExportError(
            f"{model_name!r} has hidden size {dim}; the engine's file format "
            f"expects {EXPECTED_DIM}"
        )
    token_lists = tokenizer(
        [desc for _, desc in pairs], truncation=True, max_length=MAX_TOKENS
    )["input_ids"]
    cache = _encode_unique(tokenizer, model, token_lists, batch_size)
    rows = [(item_id, cache[tuple(ids)]) for (item_id, _), ids in zip(pairs, token_lists)]

    data = _serialize(dim, rows)
    out_path = Path(out_path)
    out_path.write_bytes(data)
    manifest = ExportManifest(
        model_name=model_name,
        count=len(rows),
        dim=dim,
        checksum=f"0x{fnv1a64(data):016x}",
        tokenizer=type(tokenizer).__name__,
        transformers_version=_transformers_version(),
    )
    Path(str(out_path) + ".manifest.json").write_text(manifest.to_json(), encoding="utf-8")
    log.info("exported %d vectors (dim %d) to %s", len(rows), dim, out_path)
    return manifest


def _transformers_version() -> str:
    import transformers

    return transformers.__version__


def verify_export_detail(path) -> tuple[bool, str]:
    """Structural check of an embedding file; (ok, first problem or summary)."""
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        return False, "bad magic at offset 0"
    if len(data) < 20:
        return False, f"truncated header at offset {len(data)}"
    (dim,) = struct.unpack_from("<I", data, 8)
    (count,) = struct.unpack_from("<Q", data, 12)
    off = 20
    seen: set[str] = set()
    for i in range(count):
        if off + 2 > len(data):
            return False, f"record {i}: truncated id length at offset {off}"
        (id_len,) = struct.unpack_from("<H", data, off)
        off += 2
        if off + id_len > len(data):
            return False, f"record {i}: truncated id at offset {off}"
        try:
            item_id = data[off : off + id_len].decode("utf-8")
        except UnicodeDecodeError:
            return False, f"record {i}: id is not valid UTF-8 at offset {off}"
        if item_id in seen:
            return False, f"record {i}: duplicate id {item_id!r} at offset {off}"
        seen.add(item_id)
        off += id_len
        if off + dim * 4 > len(data):
            return False, f"record {i}: truncated vector at offset {off}"
        vec = np.frombuffer(data, dtype="<f4", count=dim, offset=off)
        if not np.isfinite(vec).all():
            return False, f"record {i}: non-finite values at offset {off}"
        off += dim * 4
    if off != len(data):
        return False, f"{len(data) - off} trailing bytes at offset {off}"
    return True, f"ok: {count} records, dim {dim}"


def verify_export(path) -> bool:
    ok, detail = verify_export_detail(path)
    if not ok:
        log.warning("%s: %s", path, detail)
    return ok
