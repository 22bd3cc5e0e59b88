"""Campaign attribution from tuple vectors.

A campaign's similarity to a tuple is the max cosine over the campaign's
reference vectors. Voting counts, per campaign, the article's tuples whose
similarity clears tau (a tuple may vote for several campaigns);
thresholding additionally requires a minimum vote count before a campaign
qualifies. Neural attribution majority-votes an external classifier's
per-tuple argmax predictions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .extraction import TupleSet
from .fileio import atomic_write_jsonl, read_jsonl
from .vectorize import (
    EmbeddingCache,
    EmbeddingProvider,
    SparseVector,
    TfidfModel,
    cosine,
    embed_with_provider,
    transform_tfidf,
)

MODALITY_LEXICAL = "lexical"
MODALITY_SEMANTIC = "semantic"

UNCLASSIFIED = "Unclassified"


class EmptyCampaign(Exception):
    def __init__(self, campaign: str):
        super().__init__(f"campaign {campaign!r} has no reference vectors")
        self.campaign = campaign


class ModalityMismatch(Exception):
    pass


class UnknownLabel(Exception):
    def __init__(self, label: str):
        super().__init__(f"prediction label {label!r} is not a known campaign")
        self.label = label


@dataclass(frozen=True)
class AttributionConfig:
    tau: float = 0.25
    min_matches: int = 3
    per_campaign_min: Optional[Mapping[str, int]] = None
    # When set, a tuple votes only for its single best campaign instead of
    # every campaign clearing tau.
    exclusive: bool = False

    def __post_init__(self):
        if not (0.0 <= self.tau <= 1.0):
            raise ValueError("tau must lie in [0, 1]")
        if self.min_matches < 1:
            raise ValueError("min_matches must be >= 1")

    def min_for(self, campaign: str) -> int:
        if self.per_campaign_min and campaign in self.per_campaign_min:
            return self.per_campaign_min[campaign]
        return self.min_matches


@dataclass
class CampaignIndex:
    """Per-campaign reference vectors, one modality across the whole index."""

    modality: str
    vectors: dict[str, list] = field(default_factory=dict)
    texts: dict[str, list[str]] = field(default_factory=dict)

    def campaigns(self) -> list[str]:
        return list(self.vectors)


@dataclass(frozen=True)
class VoteTally:
    votes: dict[str, int]
    best: dict[str, float]


@dataclass(frozen=True)
class AttributionResult:
    article_id: str
    verdict: Optional[str]  # None means Unclassified
    tally: VoteTally
    method: str

    @property
    def unclassified(self) -> bool:
        return self.verdict is None

    def to_record(self) -> dict:
        return {
            "article_id": self.article_id,
            "method": self.method,
            "verdict": self.verdict if self.verdict is not None else UNCLASSIFIED,
            "unclassified": self.unclassified,
            "tally": dict(self.tally.votes),
            "best_sim": dict(self.tally.best),
        }


def index_from_labeled_texts(
    labeled_texts: Sequence[tuple[str, str]],
    modality: str,
    tfidf_model: Optional[TfidfModel] = None,
    provider: Optional[EmbeddingProvider] = None,
    cache: Optional[EmbeddingCache] = None,
    campaigns: Optional[Iterable[str]] = None,
) -> CampaignIndex:
    """Build an index from (campaign, tuple text) pairs in input order."""
    if modality == MODALITY_LEXICAL:
        if tfidf_model is None:
            raise ModalityMismatch("lexical index requires a fitted TfidfModel")
    elif modality == MODALITY_SEMANTIC:
        if provider is None:
            raise ModalityMismatch("semantic index requires an embedding provider")
    else:
        raise ModalityMismatch(f"unknown modality {modality!r}")

    texts = [text for _, text in labeled_texts]
    if modality == MODALITY_LEXICAL:
        vecs = [transform_tfidf(tfidf_model, text) for text in texts]
    else:
        vecs = embed_with_provider(provider, texts, cache) if texts else []

    index = CampaignIndex(modality=modality)
    for (campaign, text), vec in zip(labeled_texts, vecs):
        index.vectors.setdefault(campaign, []).append(vec)
        index.texts.setdefault(campaign, []).append(text)

    if campaigns is not None:
        for campaign in campaigns:
            if not index.vectors.get(campaign):
                raise EmptyCampaign(campaign)
    return index


def build_campaign_index(
    tuples: TupleSet,
    labels: Mapping[str, str],
    modality: str,
    tfidf_model: Optional[TfidfModel] = None,
    provider: Optional[EmbeddingProvider] = None,
    cache: Optional[EmbeddingCache] = None,
    campaigns: Optional[Iterable[str]] = None,
) -> CampaignIndex:
    """Group reference vectors by campaign in tuple input order.

    `labels` maps article id to campaign; every referenced article must be
    present. When `campaigns` is given, each named campaign must end up with
    at least one reference vector.
    """
    ordered = tuples.all_tuples()
    for tup in ordered:
        if tup.article_id not in labels:
            raise KeyError(f"article {tup.article_id} has no campaign label")
    labeled_texts = [(labels[t.article_id], t.text) for t in ordered]
    return index_from_labeled_texts(
        labeled_texts, modality,
        tfidf_model=tfidf_model, provider=provider, cache=cache,
        campaigns=campaigns,
    )


def sim_to_campaign(tuple_vector, campaign_vectors: Sequence) -> float:
    """Max cosine over the campaign's reference vectors; 0.0 for zero input."""
    best = 0.0
    for ref in campaign_vectors:
        sim = cosine(tuple_vector, ref)
        if sim > best:
            best = sim
    return best


def _check_vector_modality(vec, modality: str) -> None:
    is_sparse = isinstance(vec, SparseVector)
    if modality == MODALITY_LEXICAL and not is_sparse:
        raise ModalityMismatch("lexical index expects sparse vectors")
    if modality == MODALITY_SEMANTIC and is_sparse:
        raise ModalityMismatch("semantic index expects dense vectors")


def compute_tuple_sims(tuple_vectors: Sequence, index: CampaignIndex) -> list[dict[str, float]]:
    """Per-tuple best similarity to each campaign in the index."""
    sims = []
    for vec in tuple_vectors:
        _check_vector_modality(vec, index.modality)
        sims.append({c: sim_to_campaign(vec, refs) for c, refs in index.vectors.items()})
    return sims


def tally_from_sims(
    sims: Sequence[Mapping[str, float]],
    tau: float,
    campaigns: Iterable[str],
    exclusive: bool = False,
) -> VoteTally:
    votes = {c: 0 for c in campaigns}
    best = {c: 0.0 for c in campaigns}
    for tuple_sims in sims:
        for c, sim in tuple_sims.items():
            if sim > best[c]:
                best[c] = sim
        if exclusive:
            if tuple_sims:
                top = min(tuple_sims, key=lambda c: (-tuple_sims[c], c))
                if tuple_sims[top] >= tau:
                    votes[top] += 1
        else:
            for c, sim in tuple_sims.items():
                if sim >= tau:
                    votes[c] += 1
    return VoteTally(votes=votes, best=best)


def _argmax_campaign(tally: VoteTally, candidates: Iterable[str]) -> Optional[str]:
    """Highest votes, then highest best score, then smallest label."""
    ranked = sorted(
        candidates,
        key=lambda c: (-tally.votes.get(c, 0), -tally.best.get(c, 0.0), c),
    )
    return ranked[0] if ranked else None


def attribute_voting(
    article_id: str,
    tuple_vectors: Sequence,
    index: CampaignIndex,
    config: AttributionConfig,
) -> AttributionResult:
    """Assign the campaign with the most tuples clearing tau; Unclassified
    when no campaign receives any vote."""
    sims = compute_tuple_sims(tuple_vectors, index)
    method = "tfidf-vote" if index.modality == MODALITY_LEXICAL else "semantic"
    return attribute_voting_from_sims(article_id, sims, index.campaigns(), config, method)


def attribute_voting_from_sims(
    article_id: str,
    sims: Sequence[Mapping[str, float]],
    campaigns: Sequence[str],
    config: AttributionConfig,
    method: str = "tfidf-vote",
) -> AttributionResult:
    tally = tally_from_sims(sims, config.tau, campaigns, config.exclusive)
    verdict = None
    if any(v > 0 for v in tally.votes.values()):
        verdict = _argmax_campaign(tally, campaigns)
    return AttributionResult(article_id=article_id, verdict=verdict, tally=tally,
                             method=method)


def attribute_thresholding(
    article_id: str,
    tuple_vectors: Sequence,
    index: CampaignIndex,
    config: AttributionConfig,
) -> AttributionResult:
    """Voting with a required minimum vote count per campaign."""
    sims = compute_tuple_sims(tuple_vectors, index)
    return attribute_thresholding_from_sims(article_id, sims, index.campaigns(), config)


def attribute_thresholding_from_sims(
    article_id: str,
    sims: Sequence[Mapping[str, float]],
    campaigns: Sequence[str],
    config: AttributionConfig,
    method: str = "tfidf-threshold",
) -> AttributionResult:
    tally = tally_from_sims(sims, config.tau, campaigns, config.exclusive)
    qualifiers = [c for c in campaigns if tally.votes[c] >= config.min_for(c)]
    verdict = _argmax_campaign(tally, qualifiers) if qualifiers else None
    return AttributionResult(article_id=article_id, verdict=verdict, tally=tally,
                             method=method)


@dataclass(frozen=True)
class NeuralPrediction:
    """One classifier prediction for one tuple."""

    argmax: str
    probs: Mapping[str, float]


def attribute_neural(
    article_id: str,
    predictions: Sequence[NeuralPrediction],
    campaigns: Optional[Iterable[str]] = None,
) -> AttributionResult:
    """Majority vote over per-tuple argmax predictions.

    Ties break on highest summed probability, then smallest label. The
    tally's `best` map carries the summed probability per campaign (the
    tie-break key), so it is not bounded by 1 like similarity scores.
    """
    known = set(campaigns) if campaigns is not None else None
    votes: dict[str, int] = {c: 0 for c in known} if known else {}
    strength: dict[str, float] = {c: 0.0 for c in known} if known else {}
    for pred in predictions:
        if known is not None and pred.argmax not in known:
            raise UnknownLabel(pred.argmax)
        votes[pred.argmax] = votes.get(pred.argmax, 0) + 1
        for c, p in pred.probs.items():
            strength[c] = strength.get(c, 0.0) + p
    tally = VoteTally(votes=votes, best=strength)
    verdict = _argmax_campaign(tally, votes) if predictions else None
    return AttributionResult(article_id=article_id, verdict=verdict, tally=tally,
                             method="neural")


def write_attribution_results(results: Sequence[AttributionResult], path: str | Path) -> None:
    atomic_write_jsonl(path, (r.to_record() for r in results))


def load_predictions(path: str | Path) -> dict[str, list[NeuralPrediction]]:
    """Load a recorded per-tuple predictions file: one JSON object per tuple
    with keys article_id, argmax, probs (campaign -> probability)."""
    out: dict[str, list[NeuralPrediction]] = {}
    for _, rec in read_jsonl(path):
        out.setdefault(rec["article_id"], []).append(
            NeuralPrediction(argmax=rec["argmax"], probs=dict(rec["probs"]))
        )
    return out
