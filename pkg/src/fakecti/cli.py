"""Command-line entry point.

Subcommands: stats, split, extract, score-extraction, attribute, eval,
sweep, graph. Flag values override config-file values (flat TOML given via
--config), which override built-in defaults. Exit codes: 0 success, 1
operational error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Optional, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import attribution, corpus, evaluation, extraction, vectorize
from .fileio import IoFailure, atomic_write_text, read_jsonl

log = logging.getLogger("fakecti")

DEFAULTS = {
    "fractions": "train=0.66,test=0.34",
    "mode": corpus.MODE_STRATIFIED,
    "seed": 0,
    "model": "llama-3-8b-instruct",
    "temperature": 0.3,
    "endpoint": "http://localhost:8080/v1/chat/completions",
    "concurrency": 4,
    "max_retries": 2,
    "tau": 0.25,
    "min_matches": 3,
    "reps": 5,
    "tau_min": 0.1,
    "tau_max": 0.9,
    "tau_step": 0.05,
    "provider": "stub",
    "dim": 256,
}

OPERATIONAL_ERRORS = (
    IoFailure,
    corpus.MalformedLine,
    corpus.DuplicateId,
    corpus.EmptyText,
    corpus.InvalidSpec,
    extraction.EmptyInput,
    extraction.TransportFailure,
    extraction.AuthFailure,
    extraction.LengthMismatch,
    extraction.MissingGold,
    vectorize.EmptyCorpus,
    vectorize.DimensionMismatch,
    vectorize.ProviderFailure,
    attribution.EmptyCampaign,
    attribution.ModalityMismatch,
    attribution.UnknownLabel,
    evaluation.EmptyArticle,
    evaluation.MissingPredictions,
    ValueError,
    KeyError,
)


def _parse_fractions(text: str) -> tuple[tuple[str, float], ...]:
    parts = []
    for item in text.split(","):
        if "=" not in item:
            raise ValueError(f"bad fractions item {item!r}, expected name=fraction")
        name, _, value = item.partition("=")
        parts.append((name.strip(), float(value)))
    return tuple(parts)


def _parse_per_campaign_min(text: str) -> dict[str, int]:
    out = {}
    for item in text.split(","):
        name, _, value = item.partition("=")
        out[name.strip()] = int(value)
    return out


def _load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read config {path}: {exc}") from exc


def _apply_config(args: argparse.Namespace, config: dict) -> None:
    """Fill unset flags from the config file, then from built-in defaults."""
    for key, value in config.items():
        attr = key.replace("-", "_")
        if getattr(args, attr, None) is None and hasattr(args, attr):
            setattr(args, attr, value)
    for attr, value in DEFAULTS.items():
        if getattr(args, attr, None) is None and hasattr(args, attr):
            setattr(args, attr, value)


def _split_spec(args: argparse.Namespace) -> corpus.SplitSpec:
    mode = args.mode
    if mode == "campaign":
        mode = corpus.MODE_CAMPAIGN
    return corpus.SplitSpec(
        fractions=_parse_fractions(args.fractions),
        seed=int(args.seed),
        mode=mode,
    )


def _make_provider(args: argparse.Namespace) -> vectorize.EmbeddingProvider:
    if args.provider == "remote":
        import os

        if not args.embed_endpoint or not args.embed_model:
            raise ValueError("remote provider needs --embed-endpoint and --embed-model")
        return vectorize.RemoteEmbeddingProvider(
            endpoint=args.embed_endpoint,
            model_id=args.embed_model,
            dimension=int(args.dim),
            api_key=os.environ.get("FAKECTI_EMBED_API_KEY"),
        )
    synonym_map = None
    if getattr(args, "synonyms", None):
        with open(args.synonyms, "r", encoding="utf-8") as fh:
            synonym_map = json.load(fh)
    return vectorize.StubEmbeddingProvider(dimension=int(args.dim), synonym_map=synonym_map)


def _load_labeled_tuples(path: str) -> list[tuple[str, str]]:
    """Read a labeled tuple file into (campaign, tuple text) pairs.

    Accepts either {article_id, text, campaign} records or tuple records
    ({article_id, subject, relation, object, campaign}).
    """
    out = []
    for lineno, rec in read_jsonl(path):
        campaign = rec.get("campaign")
        if not campaign:
            raise corpus.MalformedLine(lineno, "train tuple record lacks a campaign label")
        if "text" in rec:
            text = rec["text"]
        elif all(k in rec for k in ("subject", "relation", "object")):
            text = vectorize.tuple_text(rec["subject"], rec["relation"], rec["object"])
        else:
            raise corpus.MalformedLine(lineno, "need text or subject/relation/object")
        out.append((campaign, text))
    return out


def cmd_stats(args: argparse.Namespace) -> int:
    dataset = corpus.load_dataset(args.dataset)
    stats = corpus.dataset_stats(dataset)
    print(json.dumps({
        "n_samples": stats.n_samples,
        "n_campaigns": stats.n_campaigns,
        "n_threat_actors": stats.n_threat_actors,
        "n_sources": stats.n_sources,
    }, indent=2))
    return 0


def cmd_split(args: argparse.Namespace) -> int:
    dataset = corpus.load_dataset(args.dataset)
    result = corpus.stratified_split(dataset, _split_spec(args))
    payload = json.dumps(result.parts, indent=2, sort_keys=True) + "\n"
    if args.out:
        atomic_write_text(args.out, payload)
    else:
        sys.stdout.write(payload)
    return 0


def cmd_extract(args: argparse.Namespace) -> int:
    dataset = corpus.load_dataset(args.dataset)
    config = extraction.ExtractionConfig(
        model_id=args.model,
        temperature=float(args.temperature),
        endpoint=args.endpoint,
        max_retries=int(args.max_retries),
        concurrency_limit=int(args.concurrency),
        include_title=bool(args.include_title),
    )
    client = extraction.HttpChatClient()
    result = extraction.extract_corpus(dataset, config, client, args.out)
    log.info("extracted %d tuples for %d articles (%d requests, %d failures)",
             len(result.tuple_set), len(result.tuple_set.by_article),
             result.requests_issued, len(result.failures))
    if result.failures:
        failures_path = str(args.out) + ".failures.jsonl"
        atomic_write_text(failures_path, "".join(
            json.dumps({"article_id": f.article_id, "error": f.error}) + "\n"
            for f in result.failures
        ))
        log.warning("wrote %d failure records to %s", len(result.failures), failures_path)
    return 0


def cmd_score_extraction(args: argparse.Namespace) -> int:
    tuples = extraction.TupleSet.load(args.tuples)
    gold = extraction.load_concept_gold(args.gold)
    judgments = extraction.load_judgments(args.judgments)
    report = extraction.score_extraction(tuples, gold, judgments)
    payload = {
        "mean_accuracy": report.mean_accuracy,
        "mean_coverage": report.mean_coverage,
        "per_article_accuracy": report.per_article_accuracy,
        "per_article_coverage": report.per_article_coverage,
    }
    if report.precision is not None:
        payload["precision"] = report.precision
    if report.recall is not None:
        payload["recall"] = report.recall
    if report.f1 is not None:
        payload["f1"] = report.f1
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def cmd_attribute(args: argparse.Namespace) -> int:
    tuples = extraction.TupleSet.load(args.tuples)
    config = attribution.AttributionConfig(
        tau=float(args.tau),
        min_matches=int(args.min_matches),
        per_campaign_min=_parse_per_campaign_min(args.per_campaign_min)
        if args.per_campaign_min else None,
    )
    results = []
    if args.method == evaluation.METHOD_NEURAL:
        if args.predictions:
            predictions = attribution.load_predictions(args.predictions)
        else:
            client = evaluation.ClassifierServiceClient()
            predictions = client.predict(tuples.all_tuples())
        for aid in tuples.article_ids():
            results.append(attribution.attribute_neural(aid, predictions.get(aid, [])))
    else:
        if not args.train_tuples:
            raise ValueError("--train-tuples is required for similarity methods")
        labeled = _load_labeled_tuples(args.train_tuples)
        if args.method == evaluation.METHOD_SEMANTIC:
            provider = _make_provider(args)
            index = attribution.index_from_labeled_texts(
                labeled, attribution.MODALITY_SEMANTIC, provider=provider)
        else:
            model = vectorize.fit_tfidf([text for _, text in labeled])
            index = attribution.index_from_labeled_texts(
                labeled, attribution.MODALITY_LEXICAL, tfidf_model=model)
            provider = None
        for aid in tuples.article_ids():
            texts = [t.text for t in tuples.tuples_for(aid)]
            if index.modality == attribution.MODALITY_SEMANTIC:
                vecs = vectorize.embed_with_provider(provider, texts) if texts else []
            else:
                vecs = [vectorize.transform_tfidf(model, t) for t in texts]
            if args.method == evaluation.METHOD_TFIDF_THRESHOLD:
                results.append(attribution.attribute_thresholding(aid, vecs, index, config))
            else:
                results.append(attribution.attribute_voting(aid, vecs, index, config))
    attribution.write_attribution_results(results, args.out)
    log.info("wrote %d attribution results to %s", len(results), args.out)
    return 0


def _eval_inputs(args: argparse.Namespace):
    dataset = corpus.load_dataset(args.dataset)
    tuples = extraction.TupleSet.load(args.tuples)
    provider = None
    predictions = None
    if args.method == evaluation.METHOD_SEMANTIC:
        provider = _make_provider(args)
    elif args.method == evaluation.METHOD_NEURAL:
        if args.predictions:
            predictions = attribution.load_predictions(args.predictions)
        else:
            client = evaluation.ClassifierServiceClient()
            predictions = client.predict(tuples.all_tuples())
    return dataset, tuples, provider, predictions


def cmd_eval(args: argparse.Namespace) -> int:
    dataset, tuples, provider, predictions = _eval_inputs(args)
    spec = evaluation.ExperimentSpec(
        method=args.method,
        split=_split_spec(args),
        repetitions=int(args.reps),
        taus=(float(args.tau),),
        min_matches=int(args.min_matches),
    )
    report = evaluation.evaluate(spec, dataset, tuples, provider=provider,
                                 predictions=predictions)
    if args.out:
        evaluation.emit_report(report, args.out)
        log.info("wrote report to %s", args.out)
    else:
        sys.stdout.write(evaluation.report_json(report))
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    dataset, tuples, provider, predictions = _eval_inputs(args)
    taus = []
    tau = float(args.tau_min)
    step = float(args.tau_step)
    while tau <= float(args.tau_max) + 1e-9:
        taus.append(round(tau, 10))
        tau += step
    spec = evaluation.ExperimentSpec(
        method=args.method,
        split=_split_spec(args),
        repetitions=int(args.reps),
        taus=tuple(taus),
        min_matches=int(args.min_matches),
    )
    result = evaluation.sweep(spec, dataset, tuples, provider=provider,
                              predictions=predictions)
    evaluation.emit_sweep(result, args.out)
    log.info("wrote sweep CSV to %s", args.out)
    return 0


def cmd_graph(args: argparse.Namespace) -> int:
    tuples = extraction.TupleSet.load(args.tuples)
    dot = evaluation.export_graph(tuples.tuples_for(args.article_id))
    if args.out:
        atomic_write_text(args.out, dot)
    else:
        sys.stdout.write(dot)
    return 0


def _add_provider_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--provider", choices=["stub", "remote"], default=None)
    p.add_argument("--dim", type=int, default=None, help="embedding dimension")
    p.add_argument("--synonyms", default=None,
                   help="JSON file mapping tokens to canonical forms (stub provider)")
    p.add_argument("--embed-endpoint", default=None)
    p.add_argument("--embed-model", default=None)


def _add_split_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--fractions", default=None,
                   help="comma-separated name=fraction parts, e.g. train=0.66,test=0.34")
    p.add_argument("--mode", choices=["stratified", "campaign"], default=None)
    p.add_argument("--seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fakecti",
        description="Concept-based CTI indicators for disinformation attribution",
    )
    parser.add_argument("--config", default=None, help="TOML config file")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="dataset statistics")
    p.add_argument("--dataset", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("split", help="write a seeded dataset split")
    p.add_argument("--dataset", required=True)
    _add_split_flags(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("extract", help="extract tuples via a chat-completion endpoint")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", default=None)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--endpoint", default=None)
    p.add_argument("--concurrency", type=int, default=None)
    p.add_argument("--max-retries", type=int, default=None)
    p.add_argument("--include-title", action="store_true")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("score-extraction", help="score tuples against judgments")
    p.add_argument("--tuples", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--judgments", required=True)
    p.set_defaults(func=cmd_score_extraction)

    p = sub.add_parser("attribute", help="attribute articles to campaigns")
    p.add_argument("--method", required=True, choices=list(evaluation.METHODS))
    p.add_argument("--tuples", required=True)
    p.add_argument("--train-tuples", default=None,
                   help="labeled reference tuples (JSONL with campaign labels)")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--min-matches", type=int, default=None)
    p.add_argument("--per-campaign-min", default=None,
                   help="comma-separated campaign=count overrides")
    p.add_argument("--predictions", default=None,
                   help="recorded per-tuple predictions JSONL (neural method)")
    p.add_argument("--out", required=True)
    _add_provider_flags(p)
    p.set_defaults(func=cmd_attribute)

    p = sub.add_parser("eval", help="run a repeated-split evaluation")
    p.add_argument("--method", required=True, choices=list(evaluation.METHODS))
    p.add_argument("--dataset", required=True)
    p.add_argument("--tuples", required=True)
    _add_split_flags(p)
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--min-matches", type=int, default=None)
    p.add_argument("--predictions", default=None)
    p.add_argument("--out", default=None)
    _add_provider_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="threshold sweep to CSV")
    p.add_argument("--method", required=True, choices=list(evaluation.METHODS))
    p.add_argument("--dataset", required=True)
    p.add_argument("--tuples", required=True)
    _add_split_flags(p)
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--tau-min", type=float, default=None)
    p.add_argument("--tau-max", type=float, default=None)
    p.add_argument("--tau-step", type=float, default=None)
    p.add_argument("--min-matches", type=int, default=None)
    p.add_argument("--predictions", default=None)
    p.add_argument("--out", required=True)
    _add_provider_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("graph", help="export one article's tuples as DOT")
    p.add_argument("--tuples", required=True)
    p.add_argument("--article-id", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_graph)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = _load_config(args.config)
        _apply_config(args, config)
        return args.func(args)
    except OPERATIONAL_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
