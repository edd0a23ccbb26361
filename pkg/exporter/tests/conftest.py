import os

# offline + single-threaded torch: deterministic and no accidental downloads
os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")
os.environ.setdefault("TOKENIZERS_PARALLELISM", "false")

import json

import pytest
import torch

torch.set_num_threads(1)

WORDS = [
    "galaxy", "station", "crew", "signal", "empire", "voyage",
    "dust", "archive", "cipher", "garden", "winter", "harbor",
]


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    """A randomly initialized 1-layer, 768-wide encoder saved to disk.

    Small enough to run in CI; the tests exercise pooling, truncation,
    caching and the file format, not embedding quality.
    """
    from tokenizers import Tokenizer, models, normalizers, pre_tokenizers, processors
    from transformers import DistilBertConfig, DistilBertModel, DistilBertTokenizerFast

    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"] + WORDS
    backend = Tokenizer(models.WordPiece({t: i for i, t in enumerate(vocab)}, unk_token="[UNK]"))
    backend.normalizer = normalizers.BertNormalizer(lowercase=True)
    backend.pre_tokenizer = pre_tokenizers.BertPreTokenizer()
    backend.post_processor = processors.TemplateProcessing(
        single="[CLS] $A [SEP]",
        pair="[CLS] $A [SEP] $B [SEP]",
        special_tokens=[("[CLS]", 2), ("[SEP]", 3)],
    )
    tokenizer = DistilBertTokenizerFast(
        tokenizer_object=backend,
        unk_token="[UNK]",
        pad_token="[PAD]",
        cls_token="[CLS]",
        sep_token="[SEP]",
        mask_token="[MASK]",
    )
    config = DistilBertConfig(
        vocab_size=len(vocab),
        dim=768,  # file format requires 768-wide vectors
        n_layers=1,
        n_heads=4,
        hidden_dim=256,
        max_position_embeddings=136,
    )
    torch.manual_seed(0)
    model = DistilBertModel(config)
    out = tmp_path_factory.mktemp("tiny-encoder")
    model.save_pretrained(out)
    tokenizer.save_pretrained(out)
    return str(out)


LONG_WORDS = [WORDS[i % len(WORDS)] for i in range(200)]


def catalog_rows():
    # full records so the same file is also loadable by the engine's reader
    rows = [
        ("b0", "galaxy crew signal voyage"),
        ("b1", "empire station dust archive"),
        ("b2", "galaxy crew signal voyage"),  # same text as b0, different id
        ("b3", " ".join(LONG_WORDS)),  # 200 tokens, truncates at 128
        ("b4", " ".join(LONG_WORDS[:126])),  # == b3 after truncation
        ("b5", "cipher garden winter harbor mystery"),
    ]
    return [
        {
            "id": item_id,
            "title": f"Title {item_id}",
            "description": desc,
            "genres": ["drama"],
            "domain": "target",
        }
        for item_id, desc in rows
    ]


@pytest.fixture()
def catalog_path(tmp_path):
    path = tmp_path / "catalog.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for row in catalog_rows():
            fh.write(json.dumps(row) + "\n")
    return path
