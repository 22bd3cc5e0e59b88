"""Tuple extraction: prompt construction, completion parsing, quality scoring.

Articles go to a chat-completion endpoint one request per article; the
completion is parsed line by line into `<subject, relation, object>` tuples
until the END LIST terminator.
"""

from __future__ import annotations

import json
import logging
import math
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Protocol, Sequence

import requests

from .corpus import Article, Dataset
from .fileio import atomic_write_jsonl, read_jsonl
from .vectorize import tuple_text

log = logging.getLogger(__name__)

END_MARKER = "END LIST"
TUPLE_DELIMITER = " - "

PROMPT_TEMPLATE = """\
Role: You are a natural language processing expert specialized in analyzing \
textual data and extracting structured information. Your task is to identify \
subject-relation-object relationships from the input text, which represent \
key actions and relationships between entities. These tuples will be used \
for structured representation of fake news articles.

Context: Subject-relation-object relationships capture the fundamental \
structure of actions and relationships described in a sentence. In these \
relationships, the subject represents the entity performing an action, the \
verb describes the action or relationship, and the object represents the \
entity affected by the action. Identifying these relationships helps in \
organizing unstructured textual data into a structured format, enabling \
easier analysis and interpretation.

Example: Text: "John gave a book to Mary."
Tuple: John - gave - a book to Mary

Instructions: Read the following text and identify all the tuples in the \
subject-verb-object form. The tuples should reflect the main actions and \
relationships between the entities mentioned in the text. Follow these steps:
1. Identify the subject of the action.
2. Identify the verb that describes the action or relationship.
3. Identify the object or destination of the action.
Return the tuples in this format: Subject - Relation - Object. At the end of \
the process, print "END LIST" to indicate the conclusion of the extraction.

Text: {text}"""

ENV_API_KEY = "FAKECTI_LLM_API_KEY"
ENV_ENDPOINT = "FAKECTI_LLM_ENDPOINT"

# Temperatures with documented extraction-quality measurements; others work
# but are logged as unvetted.
VETTED_TEMPERATURES = (0.0, 0.3, 0.6)


class EmptyInput(Exception):
    pass


class TransportFailure(Exception):
    pass


class AuthFailure(Exception):
    pass


class LengthMismatch(Exception):
    def __init__(self, article_id: str, detail: str):
        super().__init__(f"article {article_id}: {detail}")
        self.article_id = article_id


class MissingGold(Exception):
    def __init__(self, article_id: str):
        super().__init__(f"no concept gold for article {article_id}")
        self.article_id = article_id


@dataclass(frozen=True)
class ExtractionConfig:
    model_id: str = "llama-3-8b-instruct"
    temperature: float = 0.3
    endpoint: str = "http://localhost:8080/v1/chat/completions"
    max_retries: int = 2
    concurrency_limit: int = 4
    request_timeout: float = 120.0
    max_article_chars: int = 20000
    include_title: bool = False

    def __post_init__(self):
        if not (0.0 <= self.temperature <= 1.0):
            raise ValueError("temperature must lie in [0, 1]")
        if self.concurrency_limit < 1:
            raise ValueError("concurrency_limit must be >= 1")
        if all(abs(self.temperature - t) > 1e-12 for t in VETTED_TEMPERATURES):
            log.warning("temperature %.3f is outside the vetted set %s",
                        self.temperature, VETTED_TEMPERATURES)


@dataclass(frozen=True)
class ExtractedTuple:
    article_id: str
    subject: str
    relation: str
    object: str

    def __post_init__(self):
        for name in ("subject", "relation", "object"):
            if not getattr(self, name).strip():
                raise ValueError(f"tuple field {name} is empty")

    @property
    def text(self) -> str:
        return tuple_text(self.subject, self.relation, self.object)


@dataclass
class TupleSet:
    """Extracted tuples grouped by article, extraction order preserved."""

    by_article: dict[str, list[ExtractedTuple]] = field(default_factory=dict)

    def add(self, tup: ExtractedTuple) -> None:
        self.by_article.setdefault(tup.article_id, []).append(tup)

    def article_ids(self) -> list[str]:
        return list(self.by_article)

    def tuples_for(self, article_id: str) -> list[ExtractedTuple]:
        return self.by_article.get(article_id, [])

    def all_tuples(self) -> list[ExtractedTuple]:
        return [t for tuples in self.by_article.values() for t in tuples]

    def __len__(self) -> int:
        return sum(len(v) for v in self.by_article.values())

    @classmethod
    def from_tuples(cls, tuples: Sequence[ExtractedTuple]) -> "TupleSet":
        ts = cls()
        for t in tuples:
            ts.add(t)
        return ts

    @classmethod
    def load(cls, path: str | Path) -> "TupleSet":
        ts = cls()
        for _, rec in read_jsonl(path):
            ts.add(ExtractedTuple(
                article_id=rec["article_id"],
                subject=rec["subject"],
                relation=rec["relation"],
                object=rec["object"],
            ))
        return ts

    def save(self, path: str | Path) -> None:
        atomic_write_jsonl(path, (
            {"article_id": t.article_id, "subject": t.subject,
             "relation": t.relation, "object": t.object}
            for t in self.all_tuples()
        ))


@dataclass(frozen=True)
class ConceptGold:
    article_id: str
    concepts: tuple[str, ...]


@dataclass(frozen=True)
class JudgmentRecord:
    article_id: str
    tuple_correct: tuple[bool, ...]
    concepts_covered: tuple[bool, ...]
    matched_extracted: Optional[int] = None
    matched_gold: Optional[int] = None


@dataclass(frozen=True)
class ExtractionQualityReport:
    per_article_accuracy: dict[str, float]
    per_article_coverage: dict[str, float]
    mean_accuracy: float
    mean_coverage: float
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]
    avg_extraction_seconds: Optional[float]


def percent_one_decimal(ratio: float) -> float:
    """Ratio as a percentage truncated to one decimal place.

    Truncation, not half-up rounding: 2/7 displays as 28.5, matching how
    reported coverage figures are quoted.
    """
    return math.floor(ratio * 1000) / 10


def build_prompt(article_text: str) -> str:
    """Render the fixed extraction prompt around the article text."""
    if not article_text.strip():
        raise EmptyInput("article text is empty")
    return PROMPT_TEMPLATE.format(text=article_text)


_LIST_MARKER_RE = re.compile(r"^(?:[-*•]\s+|\d+[.)]\s+)")


@dataclass(frozen=True)
class ParseResult:
    tuples: tuple[ExtractedTuple, ...]
    skipped_lines: int


def parse_tuples(completion: str, article_id: str) -> ParseResult:
    """Parse `Subject - Relation - Object` lines up to the first END LIST.

    A line yields a tuple iff splitting on ` - ` into at most three parts
    gives three non-empty parts; the third keeps any further delimiters
    verbatim. Leading list markers are stripped first. Non-matching,
    non-blank lines are counted as skipped.
    """
    tuples: list[ExtractedTuple] = []
    skipped = 0
    for raw_line in completion.splitlines():
        line = raw_line.strip()
        if line == END_MARKER:
            break
        if not line:
            continue
        line = _LIST_MARKER_RE.sub("", line).strip()
        parts = [p.strip() for p in line.split(TUPLE_DELIMITER, 2)]
        if len(parts) == 3 and all(parts):
            tuples.append(ExtractedTuple(
                article_id=article_id,
                subject=parts[0],
                relation=parts[1],
                object=parts[2],
            ))
        else:
            skipped += 1
    return ParseResult(tuples=tuple(tuples), skipped_lines=skipped)


class ChatCompletionClient(Protocol):
    def complete(self, prompt: str, config: ExtractionConfig) -> str: ...


class HttpChatClient:
    """Chat-completion endpoint speaking the OpenAI-style messages schema."""

    def __init__(self, endpoint: Optional[str] = None, api_key: Optional[str] = None):
        self.endpoint = endpoint or os.environ.get(ENV_ENDPOINT)
        self.api_key = api_key if api_key is not None else os.environ.get(ENV_API_KEY)

    def complete(self, prompt: str, config: ExtractionConfig) -> str:
        endpoint = self.endpoint or config.endpoint
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {
            "model": config.model_id,
            "temperature": config.temperature,
            "messages": [{"role": "user", "content": prompt}],
        }
        try:
            resp = requests.post(endpoint, json=body, headers=headers,
                                 timeout=config.request_timeout)
        except requests.RequestException as exc:
            raise TransportFailure(f"request failed: {exc}") from exc
        if resp.status_code in (401, 403):
            raise AuthFailure(f"endpoint returned {resp.status_code}")
        if resp.status_code != 200:
            raise TransportFailure(f"endpoint returned {resp.status_code}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportFailure(f"malformed completion response: {exc}") from exc


@dataclass
class ArticleExtraction:
    article_id: str
    tuples: tuple[ExtractedTuple, ...]
    seconds: float
    attempts: int
    skipped_lines: int
    warning: Optional[str] = None


def _prompt_text(article: Article, config: ExtractionConfig) -> str:
    text = article.text
    if config.include_title and article.title:
        text = f"{article.title}\n\n{text}"
    if len(text) > config.max_article_chars:
        log.warning("article %s truncated from %d to %d chars",
                    article.id, len(text), config.max_article_chars)
        text = text[: config.max_article_chars]
    return text


def extract_article(
    article: Article,
    config: ExtractionConfig,
    client: ChatCompletionClient,
) -> ArticleExtraction:
    """Extract tuples for one article, retrying transport errors and empty
    completions up to config.max_retries extra attempts."""
    prompt = build_prompt(_prompt_text(article, config))
    start = time.monotonic()
    attempts = 0
    last_transport: Optional[TransportFailure] = None
    empty_result: Optional[ParseResult] = None
    while attempts <= config.max_retries:
        attempts += 1
        try:
            completion = client.complete(prompt, config)
        except TransportFailure as exc:
            last_transport = exc
            continue
        parsed = parse_tuples(completion, article.id)
        if parsed.tuples:
            return ArticleExtraction(
                article_id=article.id,
                tuples=parsed.tuples,
                seconds=time.monotonic() - start,
                attempts=attempts,
                skipped_lines=parsed.skipped_lines,
            )
        empty_result = parsed
    if empty_result is not None:
        log.warning("article %s: no tuples extracted after %d attempts", article.id, attempts)
        return ArticleExtraction(
            article_id=article.id,
            tuples=(),
            seconds=time.monotonic() - start,
            attempts=attempts,
            skipped_lines=empty_result.skipped_lines,
            warning=f"empty extraction for article {article.id}",
        )
    raise TransportFailure(
        f"article {article.id}: transport failed after {attempts} attempts: {last_transport}"
    )


@dataclass(frozen=True)
class FailureRecord:
    article_id: str
    error: str


@dataclass
class CorpusExtractionResult:
    tuple_set: TupleSet
    failures: list[FailureRecord]
    timings: dict[str, float]
    requests_issued: int


def extract_corpus(
    dataset: Dataset,
    config: ExtractionConfig,
    client: ChatCompletionClient,
    out_path: str | Path,
) -> CorpusExtractionResult:
    """Extract every article, at most concurrency_limit requests in flight.

    Completed article groups are appended to out_path as they finish, so an
    interrupted run leaves valid JSONL behind and a rerun skips whatever is
    already there. On completion the file is rewritten atomically in dataset
    order regardless of completion order. Per-article transport failures are
    collected; only AuthFailure aborts the run.
    """
    out_path = Path(out_path)
    existing = TupleSet.load(out_path) if out_path.exists() else TupleSet()
    done = set(existing.by_article)
    pending = [a for a in dataset.articles if a.id not in done]

    results: dict[str, ArticleExtraction] = {}
    failures: list[FailureRecord] = []
    issued = 0
    append_lock = threading.Lock()

    def record(extraction: ArticleExtraction) -> ArticleExtraction:
        if extraction.tuples:
            lines = "".join(
                json.dumps({"article_id": t.article_id, "subject": t.subject,
                            "relation": t.relation, "object": t.object},
                           ensure_ascii=False) + "\n"
                for t in extraction.tuples
            )
            with append_lock:
                with open(out_path, "a", encoding="utf-8") as fh:
                    fh.write(lines)
                    fh.flush()
        return extraction

    if pending:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with ThreadPoolExecutor(max_workers=config.concurrency_limit) as pool:
            futures = {
                pool.submit(lambda a=art: record(extract_article(a, config, client))): art
                for art in pending
            }
            issued = len(futures)
            try:
                for future, art in futures.items():
                    try:
                        results[art.id] = future.result()
                    except TransportFailure as exc:
                        failures.append(FailureRecord(article_id=art.id, error=str(exc)))
            except AuthFailure:
                for future in futures:
                    future.cancel()
                raise

    merged = TupleSet()
    for art in dataset.articles:
        if art.id in existing.by_article:
            for tup in existing.by_article[art.id]:
                merged.add(tup)
        elif art.id in results:
            extraction = results[art.id]
            if extraction.warning:
                failures.append(FailureRecord(article_id=art.id, error=extraction.warning))
            for tup in extraction.tuples:
                merged.add(tup)
    merged.save(out_path)

    timings = {aid: res.seconds for aid, res in results.items()}
    return CorpusExtractionResult(
        tuple_set=merged,
        failures=failures,
        timings=timings,
        requests_issued=issued,
    )


def load_concept_gold(path: str | Path) -> dict[str, ConceptGold]:
    gold: dict[str, ConceptGold] = {}
    for _, rec in read_jsonl(path):
        gold[rec["article_id"]] = ConceptGold(
            article_id=rec["article_id"],
            concepts=tuple(rec["concepts"]),
        )
    return gold


def load_judgments(path: str | Path) -> list[JudgmentRecord]:
    records = []
    for _, rec in read_jsonl(path):
        records.append(JudgmentRecord(
            article_id=rec["article_id"],
            tuple_correct=tuple(bool(x) for x in rec.get("tuple_correct", [])),
            concepts_covered=tuple(bool(x) for x in rec.get("concepts_covered", [])),
            matched_extracted=rec.get("matched_extracted"),
            matched_gold=rec.get("matched_gold"),
        ))
    return records


def score_extraction(
    tuples: TupleSet,
    gold: Mapping[str, ConceptGold],
    judgments: Sequence[JudgmentRecord],
    timings: Optional[Mapping[str, float]] = None,
) -> ExtractionQualityReport:
    """Accuracy = correct tuples / extracted tuples, coverage = covered
    concepts / gold concepts, both per article; corpus values are unweighted
    means over judged articles."""
    acc: dict[str, float] = {}
    cov: dict[str, float] = {}
    precisions: list[float] = []
    recalls: list[float] = []
    for judgment in judgments:
        aid = judgment.article_id
        article_tuples = tuples.tuples_for(aid)
        if len(judgment.tuple_correct) != len(article_tuples):
            raise LengthMismatch(
                aid,
                f"{len(judgment.tuple_correct)} correctness flags for "
                f"{len(article_tuples)} tuples",
            )
        if judgment.concepts_covered:
            if aid not in gold:
                raise MissingGold(aid)
            n_concepts = len(gold[aid].concepts)
            if len(judgment.concepts_covered) != n_concepts:
                raise LengthMismatch(
                    aid,
                    f"{len(judgment.concepts_covered)} coverage flags for "
                    f"{n_concepts} gold concepts",
                )
            cov[aid] = sum(judgment.concepts_covered) / n_concepts
        if judgment.tuple_correct:
            n_extracted = len(judgment.tuple_correct)
            acc[aid] = sum(judgment.tuple_correct) / n_extracted
            if judgment.matched_extracted is not None:
                precisions.append(judgment.matched_extracted / n_extracted)
        if judgment.matched_gold is not None:
            if aid not in gold:
                raise MissingGold(aid)
            recalls.append(judgment.matched_gold / len(gold[aid].concepts))

    precision = sum(precisions) / len(precisions) if precisions else None
    recall = sum(recalls) / len(recalls) if recalls else None
    f1 = None
    if precision is not None and recall is not None:
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    avg_seconds = None
    if timings:
        avg_seconds = sum(timings.values()) / len(timings)
    return ExtractionQualityReport(
        per_article_accuracy=acc,
        per_article_coverage=cov,
        mean_accuracy=sum(acc.values()) / len(acc) if acc else 0.0,
        mean_coverage=sum(cov.values()) / len(cov) if cov else 0.0,
        precision=precision,
        recall=recall,
        f1=f1,
        avg_extraction_seconds=avg_seconds,
    )
