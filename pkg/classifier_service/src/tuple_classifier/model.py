"""Encoder construction, tokenization, and the saved-model artifact.

The default encoder is a compact transformer trained from scratch over a
WordPiece tokenizer fitted on the training tuples; pass `base_model` to
fine-tune a locally available pre-trained checkpoint instead (the build
environment has no model hub access, so nothing is downloaded implicitly).
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from tokenizers import Tokenizer, models as tok_models, pre_tokenizers, trainers
from tokenizers.processors import TemplateProcessing
from transformers import DistilBertConfig, DistilBertForSequenceClassification

SPECIAL_TOKENS = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"]


class ModelNotLoaded(Exception):
    pass


class EmptyInput(Exception):
    pass


@dataclass(frozen=True)
class EncoderArch:
    dim: int = 96
    n_layers: int = 2
    n_heads: int = 4
    hidden_dim: int = 192
    max_len: int = 64
    vocab_size: int = 2000


def train_wordpiece(texts: Sequence[str], vocab_size: int, max_len: int) -> Tokenizer:
    tokenizer = Tokenizer(tok_models.WordPiece(unk_token="[UNK]"))
    tokenizer.pre_tokenizer = pre_tokenizers.Whitespace()
    trainer = trainers.WordPieceTrainer(
        vocab_size=vocab_size, special_tokens=SPECIAL_TOKENS)
    tokenizer.train_from_iterator(texts, trainer)
    tokenizer.post_processor = TemplateProcessing(
        single="[CLS] $A [SEP]",
        special_tokens=[
            ("[CLS]", tokenizer.token_to_id("[CLS]")),
            ("[SEP]", tokenizer.token_to_id("[SEP]")),
        ],
    )
    tokenizer.enable_padding(
        pad_id=tokenizer.token_to_id("[PAD]"), pad_token="[PAD]")
    tokenizer.enable_truncation(max_length=max_len)
    return tokenizer


def build_scratch_model(vocab_size: int, pad_id: int, n_labels: int,
                        arch: EncoderArch) -> DistilBertForSequenceClassification:
    config = DistilBertConfig(
        vocab_size=vocab_size,
        dim=arch.dim,
        n_layers=arch.n_layers,
        n_heads=arch.n_heads,
        hidden_dim=arch.hidden_dim,
        num_labels=n_labels,
        max_position_embeddings=arch.max_len,
        pad_token_id=pad_id,
    )
    return DistilBertForSequenceClassification(config)


def load_pretrained(base_model: str, n_labels: int):
    """Fine-tuning path for a locally available pre-trained checkpoint."""
    from transformers import AutoModelForSequenceClassification, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(base_model)
    model = AutoModelForSequenceClassification.from_pretrained(
        base_model, num_labels=n_labels)
    return tokenizer, model


class BatchEncoder:
    """Uniform encode interface over a tokenizers.Tokenizer or a
    transformers tokenizer."""

    def __init__(self, tokenizer, max_len: int, pretrained: bool):
        self.tokenizer = tokenizer
        self.max_len = max_len
        self.pretrained = pretrained

    def __call__(self, texts: Sequence[str]) -> tuple[torch.Tensor, torch.Tensor]:
        if self.pretrained:
            enc = self.tokenizer(list(texts), padding=True, truncation=True,
                                 max_length=self.max_len, return_tensors="pt")
            return enc["input_ids"], enc["attention_mask"]
        encodings = self.tokenizer.encode_batch(list(texts))
        ids = torch.tensor([e.ids for e in encodings], dtype=torch.long)
        mask = torch.tensor([e.attention_mask for e in encodings], dtype=torch.long)
        return ids, mask


def _state_dict_digest(model: torch.nn.Module) -> str:
    buffer = io.BytesIO()
    torch.save({k: v.cpu() for k, v in sorted(model.state_dict().items())}, buffer)
    return hashlib.sha256(buffer.getvalue()).hexdigest()[:12]


@dataclass
class ClassifierArtifact:
    model: torch.nn.Module
    encoder: BatchEncoder
    labels: tuple[str, ...]
    model_version: str

    def predict_probs(self, texts: Sequence[str], batch_size: int = 64) -> np.ndarray:
        """Probability matrix, rows in input order, columns in label order."""
        if not texts:
            raise EmptyInput("no tuples to predict")
        self.model.eval()
        rows = []
        with torch.no_grad():
            for start in range(0, len(texts), batch_size):
                ids, mask = self.encoder(texts[start:start + batch_size])
                logits = self.model(input_ids=ids, attention_mask=mask).logits
                rows.append(torch.softmax(logits, dim=-1).cpu().numpy())
        return np.concatenate(rows, axis=0)

    def save(self, out_dir: str | Path) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        meta = {
            "model_version": self.model_version,
            "labels": list(self.labels),
            "max_len": self.encoder.max_len,
            "pretrained": self.encoder.pretrained,
        }
        (out_dir / "meta.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
        if self.encoder.pretrained:
            self.model.save_pretrained(out_dir / "model")
            self.encoder.tokenizer.save_pretrained(out_dir / "model")
        else:
            self.encoder.tokenizer.save(str(out_dir / "tokenizer.json"))
            self.model.config.to_json_file(out_dir / "config.json")
            torch.save(self.model.state_dict(), out_dir / "model.pt")

    @classmethod
    def load(cls, model_dir: str | Path) -> "ClassifierArtifact":
        model_dir = Path(model_dir)
        meta_path = model_dir / "meta.json"
        if not meta_path.exists():
            raise ModelNotLoaded(f"no model artifact at {model_dir}")
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        labels = tuple(meta["labels"])
        if meta["pretrained"]:
            from transformers import AutoModelForSequenceClassification, AutoTokenizer

            tokenizer = AutoTokenizer.from_pretrained(model_dir / "model")
            model = AutoModelForSequenceClassification.from_pretrained(model_dir / "model")
            encoder = BatchEncoder(tokenizer, meta["max_len"], pretrained=True)
        else:
            tokenizer = Tokenizer.from_file(str(model_dir / "tokenizer.json"))
            config = DistilBertConfig.from_json_file(model_dir / "config.json")
            model = DistilBertForSequenceClassification(config)
            model.load_state_dict(torch.load(model_dir / "model.pt",
                                             map_location="cpu", weights_only=True))
            encoder = BatchEncoder(tokenizer, meta["max_len"], pretrained=False)
        model.eval()
        return cls(model=model, encoder=encoder, labels=labels,
                   model_version=meta["model_version"])


def make_version(model: torch.nn.Module) -> str:
    return _state_dict_digest(model)
