"""Fine-tuning loop with validation-loss early stopping and curve logging."""

from __future__ import annotations

import copy
import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import torch

from .data import LabeledTuple
from .encoding import LabelEncoding
from .model import (
    BatchEncoder,
    ClassifierArtifact,
    EncoderArch,
    build_scratch_model,
    load_pretrained,
    make_version,
    train_wordpiece,
)

log = logging.getLogger(__name__)


class SingleClass(Exception):
    pass


class EmptyValidation(Exception):
    pass


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 2e-5
    batch_size: int = 32
    max_epochs: int = 30
    patience: int = 3
    seed: int = 0
    base_model: Optional[str] = None
    arch: EncoderArch = field(default_factory=EncoderArch)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    train_acc: float
    val_acc: float


class EarlyStopper:
    """Track best validation loss; stop after `patience` epochs without
    improvement; the best state dict is kept for restoration."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_loss = float("inf")
        self.best_epoch = -1
        self.best_state: Optional[dict] = None
        self.bad_epochs = 0

    def update(self, epoch: int, val_loss: float, model: torch.nn.Module) -> bool:
        """Record the epoch; return True when training should stop."""
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            self.best_epoch = epoch
            self.best_state = copy.deepcopy(model.state_dict())
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        return self.bad_epochs >= self.patience

    def restore(self, model: torch.nn.Module) -> None:
        if self.best_state is not None:
            model.load_state_dict(self.best_state)


@dataclass
class TrainResult:
    artifact: ClassifierArtifact
    encoding: LabelEncoding
    curves: list[EpochStats]
    best_epoch: int
    stopped_epoch: int


def _run_epoch(model, encoder, batch_size, texts, labels, optimizer=None):
    training = optimizer is not None
    model.train(training)
    loss_sum = 0.0
    correct = 0
    with torch.set_grad_enabled(training):
        for start in range(0, len(texts), batch_size):
            batch_texts = texts[start:start + batch_size]
            batch_labels = labels[start:start + batch_size]
            ids, mask = encoder(batch_texts)
            out = model(input_ids=ids, attention_mask=mask, labels=batch_labels)
            if training:
                optimizer.zero_grad()
                out.loss.backward()
                optimizer.step()
            loss_sum += out.loss.item() * len(batch_texts)
            correct += int((out.logits.argmax(dim=-1) == batch_labels).sum())
    return loss_sum / len(texts), correct / len(texts)


def write_curves(curves: Sequence[EpochStats], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss", "train_acc", "val_acc"])
        for row in curves:
            writer.writerow([row.epoch, f"{row.train_loss:.6f}", f"{row.val_loss:.6f}",
                             f"{row.train_acc:.6f}", f"{row.val_acc:.6f}"])


def train(
    train_tuples: Sequence[LabeledTuple],
    val_tuples: Sequence[LabeledTuple],
    config: TrainingConfig,
    out_dir: Optional[str | Path] = None,
) -> TrainResult:
    """Fine-tune the classifier; early stopping restores the checkpoint with
    the minimum validation loss. Saves the artifact and per-epoch curves
    under out_dir when given."""
    encoding = LabelEncoding.from_labels(t.campaign for t in train_tuples)
    if len(encoding) < 2:
        raise SingleClass("training data must contain at least two campaigns")
    if not val_tuples:
        raise EmptyValidation("validation split is empty")
    for t in val_tuples:
        if t.campaign not in encoding.labels:
            raise SingleClass(
                f"validation campaign {t.campaign!r} absent from training data")

    torch.manual_seed(config.seed)
    train_texts = [t.text for t in train_tuples]
    val_texts = [t.text for t in val_tuples]
    train_labels = torch.tensor([encoding.index_of(t.campaign) for t in train_tuples])
    val_labels = torch.tensor([encoding.index_of(t.campaign) for t in val_tuples])

    if config.base_model:
        tokenizer, model = load_pretrained(config.base_model, len(encoding))
        encoder = BatchEncoder(tokenizer, config.arch.max_len, pretrained=True)
    else:
        tokenizer = train_wordpiece(train_texts, config.arch.vocab_size,
                                    config.arch.max_len)
        model = build_scratch_model(tokenizer.get_vocab_size(),
                                    tokenizer.token_to_id("[PAD]"),
                                    len(encoding), config.arch)
        encoder = BatchEncoder(tokenizer, config.arch.max_len, pretrained=False)

    optimizer = torch.optim.AdamW(model.parameters(), lr=config.learning_rate)
    stopper = EarlyStopper(config.patience)
    curves: list[EpochStats] = []
    stopped_epoch = config.max_epochs - 1
    for epoch in range(config.max_epochs):
        train_loss, train_acc = _run_epoch(
            model, encoder, config.batch_size, train_texts, train_labels, optimizer)
        val_loss, val_acc = _run_epoch(
            model, encoder, config.batch_size, val_texts, val_labels)
        curves.append(EpochStats(epoch, train_loss, val_loss, train_acc, val_acc))
        log.info("epoch %d: train_loss=%.4f val_loss=%.4f val_acc=%.3f",
                 epoch, train_loss, val_loss, val_acc)
        if stopper.update(epoch, val_loss, model):
            stopped_epoch = epoch
            log.info("early stop at epoch %d, restoring epoch %d",
                     epoch, stopper.best_epoch)
            break
        stopped_epoch = epoch
    stopper.restore(model)
    model.eval()

    artifact = ClassifierArtifact(
        model=model,
        encoder=encoder,
        labels=encoding.labels,
        model_version=make_version(model),
    )
    result = TrainResult(
        artifact=artifact,
        encoding=encoding,
        curves=curves,
        best_epoch=stopper.best_epoch,
        stopped_epoch=stopped_epoch,
    )
    if out_dir is not None:
        out_dir = Path(out_dir)
        artifact.save(out_dir)
        encoding.save(out_dir / "label_encoding.json")
        write_curves(curves, out_dir / "curves.csv")
    return result
