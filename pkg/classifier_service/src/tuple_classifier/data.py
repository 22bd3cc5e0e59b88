"""Labeled tuple records: JSON Lines with article_id, text, campaign."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


class MalformedRecord(Exception):
    def __init__(self, lineno: int, reason: str):
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno


@dataclass(frozen=True)
class LabeledTuple:
    article_id: str
    text: str
    campaign: str


def load_labeled_tuples(path: str | Path) -> list[LabeledTuple]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except ValueError as exc:
                raise MalformedRecord(lineno, f"invalid JSON: {exc}") from exc
            for key in ("article_id", "text", "campaign"):
                if not rec.get(key):
                    raise MalformedRecord(lineno, f"missing {key!r}")
            records.append(LabeledTuple(
                article_id=rec["article_id"],
                text=rec["text"],
                campaign=rec["campaign"],
            ))
    return records
