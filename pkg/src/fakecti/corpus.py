"""Dataset loading, validation, splitting, and statistics.

Datasets are JSON Lines: one article per line with keys
`id, title, text, link, campaign, threat_actor, medium`. `link`,
`threat_actor` and `medium` are optional; a missing `id` is derived from the
line number as `row-<n>`; a missing or empty `campaign` becomes the
`UNLABELED` sentinel so attribution-only input can flow through.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional
from urllib.parse import urlparse

from .fileio import IoFailure, atomic_write_text, jsonl_dumps
from .rng import Xoshiro256StarStar

UNLABELED = "unlabeled"

MODE_STRATIFIED = "stratified"
MODE_CAMPAIGN = "campaign"


class MalformedLine(Exception):
    def __init__(self, lineno: int, reason: str):
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno


class DuplicateId(Exception):
    def __init__(self, article_id: str):
        super().__init__(f"duplicate article id: {article_id}")
        self.article_id = article_id


class EmptyText(Exception):
    def __init__(self, article_id: str):
        super().__init__(f"article {article_id} has empty text")
        self.article_id = article_id


class InvalidSpec(Exception):
    pass


@dataclass(frozen=True)
class Article:
    id: str
    title: str
    text: str
    campaign: str = UNLABELED
    link: Optional[str] = None
    threat_actor: Optional[str] = None
    medium: Optional[str] = None

    @property
    def labeled(self) -> bool:
        return self.campaign != UNLABELED


@dataclass(frozen=True)
class Dataset:
    articles: tuple[Article, ...]
    campaigns: frozenset[str] = field(init=False)

    def __post_init__(self):
        seen = set()
        for art in self.articles:
            if art.id in seen:
                raise DuplicateId(art.id)
            seen.add(art.id)
        labels = frozenset(a.campaign for a in self.articles if a.labeled)
        object.__setattr__(self, "campaigns", labels)

    def __len__(self) -> int:
        return len(self.articles)

    def campaigns_in_order(self) -> list[str]:
        """Distinct campaign labels in first-appearance order (sentinel excluded)."""
        out: list[str] = []
        seen: set[str] = set()
        for art in self.articles:
            if art.labeled and art.campaign not in seen:
                seen.add(art.campaign)
                out.append(art.campaign)
        return out

    def by_id(self) -> dict[str, Article]:
        return {a.id: a for a in self.articles}


@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple[tuple[str, float], ...]
    seed: int
    mode: str = MODE_STRATIFIED

    def __post_init__(self):
        if len(self.fractions) < 2:
            raise InvalidSpec("need at least two parts")
        names = [name for name, _ in self.fractions]
        if len(set(names)) != len(names):
            raise InvalidSpec("duplicate part names")
        for name, frac in self.fractions:
            if not (0.0 < frac < 1.0):
                raise InvalidSpec(f"fraction for part {name!r} must lie in (0,1)")
        total = sum(frac for _, frac in self.fractions)
        if abs(total - 1.0) > 1e-9:
            raise InvalidSpec(f"fractions sum to {total}, expected 1.0")
        if self.mode not in (MODE_STRATIFIED, MODE_CAMPAIGN):
            raise InvalidSpec(f"unknown split mode {self.mode!r}")


@dataclass(frozen=True)
class SplitResult:
    parts: dict[str, list[str]]

    def part_of(self, article_id: str) -> str:
        for name, ids in self.parts.items():
            if article_id in ids:
                return name
        raise KeyError(article_id)


@dataclass(frozen=True)
class DatasetStats:
    n_samples: int
    n_campaigns: int
    n_threat_actors: int
    n_sources: int


def _parse_article(lineno: int, rec: object) -> Article:
    if not isinstance(rec, dict):
        raise MalformedLine(lineno, "record is not an object")
    if "text" not in rec:
        raise MalformedLine(lineno, 'missing "text" field')

    def _str_field(key: str, default: Optional[str]) -> Optional[str]:
        value = rec.get(key, default)
        if value is None:
            return None
        if not isinstance(value, str):
            raise MalformedLine(lineno, f'field "{key}" is not a string')
        return value

    article_id = _str_field("id", None)
    if article_id is None:
        article_id = f"row-{lineno}"
    elif not article_id:
        raise MalformedLine(lineno, "empty id")
    text = _str_field("text", None)
    title = _str_field("title", "") or ""
    campaign = _str_field("campaign", None) or UNLABELED
    article = Article(
        id=article_id,
        title=title,
        text=text or "",
        campaign=campaign,
        link=_str_field("link", None) or None,
        threat_actor=_str_field("threat_actor", None) or None,
        medium=_str_field("medium", None) or None,
    )
    if not article.text.strip():
        raise EmptyText(article.id)
    return article


def load_dataset(path: str | Path) -> Dataset:
    """Load and validate a JSONL dataset, preserving file order."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return loads_dataset(text)


def loads_dataset(text: str) -> Dataset:
    """Parse dataset lines from a string (same validation as load_dataset)."""
    articles: list[Article] = []
    seen: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except ValueError as exc:
            raise MalformedLine(lineno, f"invalid JSON: {exc}") from exc
        article = _parse_article(lineno, rec)
        if article.id in seen:
            raise DuplicateId(article.id)
        seen.add(article.id)
        articles.append(article)
    return Dataset(articles=tuple(articles))


def serialize_dataset(dataset: Dataset) -> str:
    """JSONL form of a dataset; load ∘ serialize is the identity."""
    records = []
    for art in dataset.articles:
        rec = {"id": art.id, "title": art.title, "text": art.text, "campaign": art.campaign}
        if art.link is not None:
            rec["link"] = art.link
        if art.threat_actor is not None:
            rec["threat_actor"] = art.threat_actor
        if art.medium is not None:
            rec["medium"] = art.medium
        records.append(rec)
    return jsonl_dumps(records)


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    atomic_write_text(path, serialize_dataset(dataset))


def _largest_remainder_counts(n: int, fractions: tuple[tuple[str, float], ...]) -> list[int]:
    """Split n units across parts by largest-remainder rounding.

    Leftover units go to the parts with the largest fractional residues,
    ties broken by declaration order.
    """
    quotas = [frac * n for _, frac in fractions]
    counts = [int(q) for q in quotas]
    leftover = n - sum(counts)
    residues = sorted(
        range(len(fractions)),
        key=lambda i: (-(quotas[i] - counts[i]), i),
    )
    for i in residues[:leftover]:
        counts[i] += 1
    return counts


def _largest_fraction_part(fractions: tuple[tuple[str, float], ...]) -> int:
    best = 0
    for i, (_, frac) in enumerate(fractions):
        if frac > fractions[best][1]:
            best = i
    return best


def stratified_split(dataset: Dataset, spec: SplitSpec) -> SplitResult:
    """Deterministic seeded split.

    Stratified mode slices each campaign by largest-remainder counts after a
    seeded shuffle; campaigns smaller than the number of parts go wholly to
    the largest-fraction part. Campaign-partitioned mode assigns whole
    campaigns to parts, with part sizes largest-remainder over the campaign
    count.
    """
    if len(dataset) == 0:
        raise InvalidSpec("empty dataset")
    rng = Xoshiro256StarStar(spec.seed)
    part_names = [name for name, _ in spec.fractions]
    parts: dict[str, list[str]] = {name: [] for name in part_names}

    groups: dict[str, list[str]] = {}
    for art in dataset.articles:
        groups.setdefault(art.campaign, []).append(art.id)
    campaign_order = dataset.campaigns_in_order()
    if any(not a.labeled for a in dataset.articles):
        campaign_order.append(UNLABELED)

    if spec.mode == MODE_STRATIFIED:
        big = _largest_fraction_part(spec.fractions)
        for campaign in campaign_order:
            ids = list(groups[campaign])
            rng.shuffle(ids)
            if len(ids) < len(part_names):
                parts[part_names[big]].extend(ids)
                continue
            counts = _largest_remainder_counts(len(ids), spec.fractions)
            offset = 0
            for name, count in zip(part_names, counts):
                parts[name].extend(ids[offset : offset + count])
                offset += count
    else:
        order = list(campaign_order)
        rng.shuffle(order)
        counts = _largest_remainder_counts(len(order), spec.fractions)
        offset = 0
        for name, count in zip(part_names, counts):
            for campaign in order[offset : offset + count]:
                parts[name].extend(groups[campaign])
            offset += count

    return SplitResult(parts=parts)


def _source_of(link: str) -> Optional[str]:
    """Source identity: lowercased host of the link, leading www. stripped."""
    host = urlparse(link).hostname
    if not host:
        return None
    host = host.lower()
    if host.startswith("www."):
        host = host[4:]
    return host or None


def dataset_stats(dataset: Dataset) -> DatasetStats:
    actors = {a.threat_actor for a in dataset.articles if a.threat_actor}
    sources = set()
    for art in dataset.articles:
        if art.link:
            host = _source_of(art.link)
            if host:
                sources.add(host)
    return DatasetStats(
        n_samples=len(dataset),
        n_campaigns=len(dataset.campaigns),
        n_threat_actors=len(actors),
        n_sources=len(sources),
    )
