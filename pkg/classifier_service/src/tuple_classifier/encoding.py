"""Campaign label <-> integer index mapping, stable across save/load."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable


@dataclass(frozen=True)
class LabelEncoding:
    labels: tuple[str, ...]  # index order = first appearance in training data

    def __post_init__(self):
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("duplicate labels in encoding")

    def __len__(self) -> int:
        return len(self.labels)

    def index_of(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown campaign label {label!r}") from None

    def label_of(self, index: int) -> str:
        return self.labels[index]

    @classmethod
    def from_labels(cls, labels: Iterable[str]) -> "LabelEncoding":
        seen: list[str] = []
        for label in labels:
            if label not in seen:
                seen.append(label)
        return cls(labels=tuple(seen))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps({"labels": list(self.labels)}), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "LabelEncoding":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(labels=tuple(payload["labels"]))
