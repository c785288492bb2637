"""Span-overlap scoring in the SQuAD-v2 style, plus dataset-level reports.

F1/EM operate on normalized token bags; dataset scores are means over records
scaled to 0-100. Pairwise agreement between two annotators reuses the same
span F1 with one annotator's spans as predictions and the other's as golds.
"""

from __future__ import annotations

import re
import statistics
import string
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .data import AdDocument, IntegrityError, Language, QARecord

# Article stopwords stripped during normalization. The convention is
# English-specific; fr/nl default to empty and are configurable per call.
DEFAULT_ARTICLES: dict[Language, tuple[str, ...]] = {
    Language.EN: ("a", "an", "the"),
    Language.FR: (),
    Language.NL: (),
}

_PUNCT = set(string.punctuation)


def normalize(
    text: str,
    language: Language | str = Language.EN,
    articles: Sequence[str] | None = None,
) -> list[str]:
    """Case-fold, strip punctuation and articles, collapse whitespace, split."""
    language = Language.parse(language)
    if articles is None:
        articles = DEFAULT_ARTICLES[language]
    text = text.lower()
    text = "".join(ch for ch in text if ch not in _PUNCT)
    if articles:
        pattern = re.compile(r"\b(" + "|".join(re.escape(a) for a in articles) + r")\b", re.UNICODE)
        text = pattern.sub(" ", text)
    return text.split()


def _f1_from_bags(pred_tokens: list[str], gold_tokens: list[str]) -> float:
    if not pred_tokens or not gold_tokens:
        # no-answer convention: agree -> 1, disagree -> 0
        return float(pred_tokens == gold_tokens)
    common = Counter(pred_tokens) & Counter(gold_tokens)
    overlap = sum(common.values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def span_f1(
    pred: str,
    golds: Sequence[str],
    language: Language | str = Language.EN,
    articles: Sequence[str] | None = None,
) -> float:
    """Token-overlap F1 of a prediction against gold spans, max over golds.

    An empty gold list means no-answer and is scored as a single empty gold.
    """
    pred_tokens = normalize(pred, language, articles)
    gold_token_bags = [normalize(g, language, articles) for g in golds]
    gold_token_bags = [bag for bag in gold_token_bags if bag] or [[]]
    return max(_f1_from_bags(pred_tokens, bag) for bag in gold_token_bags)


def span_exact_match(
    pred: str,
    golds: Sequence[str],
    language: Language | str = Language.EN,
    articles: Sequence[str] | None = None,
) -> float:
    pred_tokens = normalize(pred, language, articles)
    gold_token_bags = [normalize(g, language, articles) for g in golds]
    gold_token_bags = [bag for bag in gold_token_bags if bag] or [[]]
    return max(float(pred_tokens == bag) for bag in gold_token_bags)


@dataclass(frozen=True)
class Prediction:
    """A model's answer for one record; empty text means predicted no-answer."""

    record_id: str
    text: str
    no_answer_score_margin: float | None = None


@dataclass(frozen=True)
class MetricsReport:
    """Aggregate scores (0-100) with per-attribute and per-length breakdowns."""

    f1: float
    exact_match: float
    n: int
    per_attribute: Mapping[str, Mapping[str, float]] = field(default_factory=dict)
    per_length_bucket: Mapping[str, Mapping[str, float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "f1": self.f1,
            "exact_match": self.exact_match,
            "n": self.n,
            "per_attribute": {k: dict(v) for k, v in self.per_attribute.items()},
            "per_length_bucket": {k: dict(v) for k, v in self.per_length_bucket.items()},
        }


def _context_word_count(record: QARecord) -> int:
    return len(record.context.split())


def default_bucket_edges(records: Sequence[QARecord], n_buckets: int = 5) -> list[int]:
    """Quantile word-count edges over the given records (deduplicated)."""
    counts = sorted(_context_word_count(r) for r in records)
    if len(set(counts)) < 2:
        return []
    cuts = statistics.quantiles(counts, n=n_buckets, method="inclusive")[: n_buckets - 1]
    edges: list[int] = []
    for cut in cuts:
        edge = int(round(cut))
        if edge > (edges[-1] if edges else 0):
            edges.append(edge)
    return edges


def _bucket_label(count: int, edges: Sequence[int]) -> str:
    if not edges:
        return "all"
    if count <= edges[0]:
        return f"<={edges[0]}"
    for lo, hi in zip(edges, edges[1:]):
        if lo < count <= hi:
            return f"{lo + 1}-{hi}"
    return f">{edges[-1]}"


def _bucket_order(edges: Sequence[int]) -> list[str]:
    if not edges:
        return ["all"]
    labels = [f"<={edges[0]}"]
    labels += [f"{lo + 1}-{hi}" for lo, hi in zip(edges, edges[1:])]
    labels.append(f">{edges[-1]}")
    return labels


def _pair_predictions(preds: Sequence[Prediction], records: Sequence[QARecord]) -> dict[str, Prediction]:
    by_id: dict[str, Prediction] = {}
    duplicates = []
    for pred in preds:
        if pred.record_id in by_id:
            duplicates.append(pred.record_id)
        by_id[pred.record_id] = pred
    record_ids = {r.id for r in records}
    missing = sorted(record_ids - by_id.keys())
    unexpected = sorted(by_id.keys() - record_ids)
    problems = []
    if duplicates:
        problems.append("duplicate prediction ids: " + ", ".join(sorted(set(duplicates))))
    if missing:
        problems.append("records without a prediction: " + ", ".join(missing))
    if unexpected:
        problems.append("predictions without a record: " + ", ".join(unexpected))
    if problems:
        raise IntegrityError("; ".join(problems))
    return by_id


def evaluate(
    preds: Sequence[Prediction],
    records: Sequence[QARecord],
    language: Language | str = Language.EN,
    bucket_edges: Sequence[int] | None = None,
    articles: Sequence[str] | None = None,
) -> MetricsReport:
    """Score predictions against records and aggregate to a report.

    Requires exactly one prediction per record. Length buckets default to
    quintiles of the evaluated records' context word counts.
    """
    if not records:
        raise ValueError("cannot evaluate an empty record list")
    by_id = _pair_predictions(preds, records)
    if bucket_edges is None:
        edges = default_bucket_edges(records)
    else:
        edges = list(bucket_edges)
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError(f"bucket edges must be strictly increasing, got {edges}")

    f1_sum = 0.0
    em_sum = 0.0
    per_attribute: dict[str, list[float]] = {}
    per_bucket: dict[str, list[float]] = {}
    for record in records:
        pred = by_id[record.id]
        f1 = span_f1(pred.text, record.answer_texts, language, articles)
        em = span_exact_match(pred.text, record.answer_texts, language, articles)
        f1_sum += f1
        em_sum += em
        per_attribute.setdefault(record.attribute, []).append(f1)
        per_bucket.setdefault(_bucket_label(_context_word_count(record), edges), []).append(f1)

    n = len(records)
    attribute_table = {
        attr: {"f1": 100.0 * sum(scores) / len(scores), "n": len(scores)}
        for attr, scores in sorted(per_attribute.items())
    }
    bucket_table = {
        label: {"f1": 100.0 * sum(per_bucket[label]) / len(per_bucket[label]), "n": len(per_bucket[label])}
        for label in _bucket_order(edges)
        if label in per_bucket
    }
    return MetricsReport(
        f1=100.0 * f1_sum / n,
        exact_match=100.0 * em_sum / n,
        n=n,
        per_attribute=attribute_table,
        per_length_bucket=bucket_table,
    )


def length_buckets(
    records: Sequence[QARecord],
    preds: Sequence[Prediction],
    bucket_edges: Sequence[int],
    language: Language | str = Language.EN,
) -> dict[str, dict[str, float]]:
    """Per-bucket F1 by context word count; empty buckets are omitted."""
    report = evaluate(preds, records, language=language, bucket_edges=bucket_edges)
    return {k: dict(v) for k, v in report.per_length_bucket.items()}


# ---------------------------------------------------------------------------
# Inter-annotator agreement


def _spans_by_unit(ads: Sequence[AdDocument]) -> dict[tuple[str, str], list[str]]:
    units: dict[tuple[str, str], list[str]] = {}
    for ad in ads:
        for ann in ad.annotations:
            units.setdefault((ad.id, ann.attribute), []).append(ann.span_text)
    return units


def _direction_score(
    pred_units: Mapping[tuple[str, str], list[str]],
    gold_units: Mapping[tuple[str, str], list[str]],
    keys: Iterable[tuple[str, str]],
    language: Language,
) -> float:
    scores = []
    for key in keys:
        pred_spans = pred_units.get(key, [])
        gold_spans = gold_units.get(key, [])
        if not pred_spans:
            scores.append(0.0)
            continue
        scores.append(sum(span_f1(p, gold_spans, language) for p in pred_spans) / len(pred_spans))
    return sum(scores) / len(scores) if scores else 1.0


def pairwise_iaa(ann_a: Sequence[AdDocument], ann_b: Sequence[AdDocument]) -> float:
    """Pairwise span-F1 agreement (0-100) between two annotation passes.

    Scores every (ad, attribute) unit annotated by either side, once with A as
    predictions against B and once the other way around, and averages the two
    directions.
    """
    ids_a = [ad.id for ad in ann_a]
    ids_b = [ad.id for ad in ann_b]
    if sorted(ids_a) != sorted(ids_b):
        only_a = sorted(set(ids_a) - set(ids_b))
        only_b = sorted(set(ids_b) - set(ids_a))
        raise IntegrityError(f"annotator ad ids differ (only in A: {only_a}; only in B: {only_b})")
    language = ann_a[0].language if ann_a else Language.EN
    units_a = _spans_by_unit(ann_a)
    units_b = _spans_by_unit(ann_b)
    keys = sorted(set(units_a) | set(units_b))
    a_to_b = _direction_score(units_a, units_b, keys, language)
    b_to_a = _direction_score(units_b, units_a, keys, language)
    return 100.0 * (a_to_b + b_to_a) / 2


def per_attribute_tsv(report: MetricsReport) -> str:
    """Render the per-attribute table as TSV (attribute, f1, n)."""
    lines = ["attribute\tf1\tn"]
    for attribute, cell in report.per_attribute.items():
        lines.append(f"{attribute}\t{cell['f1']:.2f}\t{int(cell['n'])}")
    return "\n".join(lines) + "\n"
