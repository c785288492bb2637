"""Convert annotated ads into extractive-QA records and pick questions.

Each annotated attribute of an ad becomes one answerable record whose gold
answers are all of that attribute's spans; attributes from the question map
that are absent from the ad optionally become impossible records. Question
selection scores a small set of candidate phrasings per attribute with a
frozen model and keeps the highest-F1 candidate.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from .data import (
    AdDocument,
    Answer,
    AttributeQuestionMap,
    IntegrityError,
    Language,
    QARecord,
    make_record_id,
)
from .metrics import span_f1

logger = logging.getLogger(__name__)


def ad_to_records(
    ad: AdDocument,
    qmap: AttributeQuestionMap,
    emit_negatives: bool = True,
) -> list[QARecord]:
    """Convert one ad into QA records, one per question-map attribute.

    Attributes with at least one verbatim-valid annotation become a single
    answerable record carrying all their spans as gold answers; annotations
    failing the verbatim-offset check are discarded with a warning. With
    ``emit_negatives``, every other attribute of the map becomes an
    impossible record. Record ids are ``<ad_id>::<attribute>``.
    """
    unknown = sorted({a.attribute for a in ad.annotations} - set(qmap.entries))
    if unknown:
        raise IntegrityError(f"ad {ad.id!r} has annotations for attributes not in the question map: " + ", ".join(unknown))

    valid, discarded = ad.split_annotations()
    for ann in discarded:
        logger.warning(
            "discarding annotation %s@%d on ad %s: span is not verbatim at its offset",
            ann.attribute,
            ann.char_start,
            ad.id,
        )

    spans_by_attribute: dict[str, list[Answer]] = {}
    for ann in valid:
        spans_by_attribute.setdefault(ann.attribute, []).append(Answer(ann.span_text, ann.char_start))

    records: list[QARecord] = []
    for attribute, question in qmap.entries.items():
        answers = spans_by_attribute.get(attribute)
        if answers:
            records.append(
                QARecord(
                    id=make_record_id(ad.id, attribute),
                    context=ad.text,
                    question=question,
                    answers=tuple(answers),
                    is_impossible=False,
                    attribute=attribute,
                    source_ad_id=ad.id,
                )
            )
        elif emit_negatives:
            records.append(
                QARecord(
                    id=make_record_id(ad.id, attribute),
                    context=ad.text,
                    question=question,
                    answers=(),
                    is_impossible=True,
                    attribute=attribute,
                    source_ad_id=ad.id,
                )
            )
    return records


@dataclass(frozen=True)
class ConversionReport:
    """Counts from converting a corpus (annotation counts, not record counts,
    are what corpus size tables usually quote)."""

    n_ads: int
    n_answerable_records: int
    n_impossible_records: int
    n_answers: int
    n_discarded_annotations: int
    per_attribute_answers: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "n_ads": self.n_ads,
            "n_answerable_records": self.n_answerable_records,
            "n_impossible_records": self.n_impossible_records,
            "n_answers": self.n_answers,
            "n_discarded_annotations": self.n_discarded_annotations,
            "per_attribute_answers": dict(self.per_attribute_answers),
        }


def convert_corpus(
    ads: Sequence[AdDocument],
    qmap: AttributeQuestionMap,
    emit_negatives: bool = True,
) -> tuple[list[QARecord], ConversionReport]:
    """Convert a corpus ad by ad, preserving ad order, and tally counts."""
    records: list[QARecord] = []
    n_discarded = 0
    per_attribute: Counter[str] = Counter()
    for ad in ads:
        _, discarded = ad.split_annotations()
        n_discarded += len(discarded)
        records.extend(ad_to_records(ad, qmap, emit_negatives=emit_negatives))
    answerable = [r for r in records if not r.is_impossible]
    for record in answerable:
        per_attribute[record.attribute] += len(record.answers)
    report = ConversionReport(
        n_ads=len(ads),
        n_answerable_records=len(answerable),
        n_impossible_records=len(records) - len(answerable),
        n_answers=sum(per_attribute.values()),
        n_discarded_annotations=n_discarded,
        per_attribute_answers=dict(sorted(per_attribute.items())),
    )
    return records, report


def single_attribute_records(
    ads: Sequence[AdDocument],
    attribute: str,
    question: str,
    emit_negatives: bool = True,
) -> list[QARecord]:
    """Records for predicting one attribute over a corpus with a given question.

    Used to score question candidates: each ad yields an answerable record if
    it has valid spans for the attribute, otherwise (optionally) an impossible
    one.
    """
    records: list[QARecord] = []
    for ad in ads:
        valid, _ = ad.split_annotations()
        answers = tuple(Answer(a.span_text, a.char_start) for a in valid if a.attribute == attribute)
        if answers:
            records.append(
                QARecord(
                    id=make_record_id(ad.id, attribute),
                    context=ad.text,
                    question=question,
                    answers=answers,
                    is_impossible=False,
                    attribute=attribute,
                    source_ad_id=ad.id,
                )
            )
        elif emit_negatives:
            records.append(
                QARecord(
                    id=make_record_id(ad.id, attribute),
                    context=ad.text,
                    question=question,
                    answers=(),
                    is_impossible=True,
                    attribute=attribute,
                    source_ad_id=ad.id,
                )
            )
    return records


def unlabeled_records_from_ads(ads: Sequence[AdDocument], qmap: AttributeQuestionMap) -> list[QARecord]:
    """Answer-less record shells (context + question only) for self-labeling."""
    records: list[QARecord] = []
    for ad in ads:
        for attribute, question in qmap.entries.items():
            records.append(
                QARecord(
                    id=make_record_id(ad.id, attribute),
                    context=ad.text,
                    question=question,
                    answers=(),
                    is_impossible=True,
                    attribute=attribute,
                    source_ad_id=ad.id,
                )
            )
    return records


@dataclass(frozen=True)
class QuestionCandidateSet:
    """Candidate question phrasings for one attribute, optionally pre-scored."""

    attribute: str
    candidates: tuple[str, ...]
    scores: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if not self.candidates:
            raise ValueError(f"attribute {self.attribute!r}: candidate list must be non-empty")
        if self.scores is not None:
            scores = tuple(float(s) for s in self.scores)
            object.__setattr__(self, "scores", scores)
            if len(scores) != len(self.candidates):
                raise ValueError(f"attribute {self.attribute!r}: scores and candidates differ in length")
            if any(not 0.0 <= s <= 1.0 for s in scores):
                raise ValueError(f"attribute {self.attribute!r}: scores must lie in [0, 1]")


@dataclass(frozen=True)
class QuestionSelection:
    """Outcome of scoring one candidate set: winner plus the full scored list."""

    attribute: str
    selected_question: str
    selected_index: int
    candidates: tuple[str, ...]
    scores: tuple[float, ...]


def _argmax_lowest_index(scores: Sequence[float]) -> int:
    best = 0
    for i, score in enumerate(scores):
        if score > scores[best]:
            best = i
    return best


def select_best_question(
    cands: QuestionCandidateSet,
    train_records_builder: Callable[[str], Sequence[QARecord]],
    frozen_model,
    language: Language | str = Language.EN,
    null_threshold: float = 0.0,
) -> QuestionSelection:
    """Score each candidate question with a frozen model and keep the best.

    The score of a candidate is the mean span F1 of the model's predictions
    over the records built for that candidate (a ratio in [0, 1]). Ties break
    toward the lowest candidate index. The model is used for inference only.
    """
    from .models import predict_answer  # deferred to avoid an import cycle

    scores: list[float] = []
    for question in cands.candidates:
        records = train_records_builder(question)
        if not records:
            scores.append(0.0)
            continue
        total = 0.0
        for record in records:
            pred = predict_answer(frozen_model, record, null_threshold=null_threshold)
            total += span_f1(pred.text, record.answer_texts, language)
        scores.append(total / len(records))
    best = _argmax_lowest_index(scores)
    return QuestionSelection(
        attribute=cands.attribute,
        selected_question=cands.candidates[best],
        selected_index=best,
        candidates=cands.candidates,
        scores=tuple(scores),
    )


def build_question_grid(
    attributes: Sequence[str],
    candidate_sets: Sequence[QuestionCandidateSet],
    records_builder: Callable[[str, str], Sequence[QARecord]],
    frozen_model,
    language: Language | str = Language.EN,
    null_threshold: float = 0.0,
) -> tuple[AttributeQuestionMap, list[QuestionSelection]]:
    """Select one question per attribute, in attribute order.

    ``records_builder(attribute, question)`` supplies the scoring records for
    a candidate. Raises if any attribute lacks a candidate set.
    """
    by_attribute = {c.attribute: c for c in candidate_sets}
    selections: list[QuestionSelection] = []
    entries: dict[str, str] = {}
    for attribute in attributes:
        if attribute not in by_attribute:
            raise ValueError(f"no candidate set for attribute {attribute!r}")
        selection = select_best_question(
            by_attribute[attribute],
            lambda q, _a=attribute: records_builder(_a, q),
            frozen_model,
            language=language,
            null_threshold=null_threshold,
        )
        selections.append(selection)
        entries[attribute] = selection.selected_question
    return AttributeQuestionMap(entries=entries, language=Language.parse(language)), selections


def write_selection_log(selections: Sequence[QuestionSelection], path: str | Path) -> None:
    """Write the question-selection provenance TSV:
    attribute, candidate, f1, selected(0/1)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        fh.write("attribute\tcandidate\tf1\tselected\n")
        for sel in selections:
            for i, (candidate, score) in enumerate(zip(sel.candidates, sel.scores)):
                fh.write(f"{sel.attribute}\t{candidate}\t{score:.6f}\t{int(i == sel.selected_index)}\n")
