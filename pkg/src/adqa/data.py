"""Core domain types, SQuAD-v2 serialization, splitting, and corpus statistics.

All character offsets in this package are Unicode code point offsets into
Python strings (this matters for accented French/Dutch text). Files are read
and written as UTF-8.
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

logger = logging.getLogger(__name__)

SQUAD_VERSION = "v2.0"


class FormatError(ValueError):
    """A file does not follow the expected structure."""


class IntegrityError(ValueError):
    """Data violates an invariant (offset mismatch, duplicate ids, ...)."""


class Language(str, Enum):
    """Corpus languages."""

    EN = "en"
    FR = "fr"
    NL = "nl"

    @classmethod
    def parse(cls, value: Language | str) -> Language:
        if isinstance(value, Language):
            return value
        try:
            return cls(value)
        except ValueError:
            options = ", ".join(m.value for m in cls)
            raise FormatError(f"unknown language {value!r}; expected one of: {options}") from None


@dataclass(frozen=True)
class AttributeAnnotation:
    """One annotated attribute span inside an ad."""

    attribute: str
    span_text: str
    char_start: int

    def __post_init__(self) -> None:
        if not self.attribute:
            raise IntegrityError("annotation attribute must be non-empty")
        if self.char_start < 0:
            raise IntegrityError(f"annotation char_start must be >= 0, got {self.char_start}")

    def matches(self, text: str) -> bool:
        """True when the recorded span appears verbatim at the recorded offset."""
        end = self.char_start + len(self.span_text)
        return end <= len(text) and text[self.char_start : end] == self.span_text


@dataclass(frozen=True)
class AdDocument:
    """One transcribed ad (the QA context) plus its attribute annotations.

    Annotations are kept as found in the source corpus; spans that fail the
    verbatim-offset check are filtered out (and logged) at conversion time,
    not at construction time.
    """

    id: str
    text: str
    language: Language = Language.EN
    annotations: tuple[AttributeAnnotation, ...] = ()
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.id:
            raise IntegrityError("ad id must be non-empty")
        object.__setattr__(self, "language", Language.parse(self.language))
        object.__setattr__(self, "annotations", tuple(self.annotations))
        object.__setattr__(self, "metadata", dict(self.metadata))

    def split_annotations(self) -> tuple[list[AttributeAnnotation], list[AttributeAnnotation]]:
        """Partition annotations into (verbatim-valid, discardable)."""
        valid: list[AttributeAnnotation] = []
        discarded: list[AttributeAnnotation] = []
        for ann in self.annotations:
            (valid if ann.matches(self.text) else discarded).append(ann)
        return valid, discarded


@dataclass(frozen=True)
class AttributeQuestionMap:
    """Ordered attribute -> natural-language question lookup.

    Iteration order of ``entries`` is meaningful: it fixes the order of
    emitted records and breaks ties elsewhere.
    """

    entries: Mapping[str, str]
    language: Language = Language.EN

    def __post_init__(self) -> None:
        entries = dict(self.entries)
        if not entries:
            raise IntegrityError("question map must not be empty")
        for attribute, question in entries.items():
            if not attribute:
                raise IntegrityError("question map attribute ids must be non-empty")
            if not question:
                raise IntegrityError(f"question for attribute {attribute!r} must be non-empty")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "language", Language.parse(self.language))

    @property
    def attributes(self) -> tuple[str, ...]:
        return tuple(self.entries)

    def __contains__(self, attribute: object) -> bool:
        return attribute in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def question_for(self, attribute: str) -> str:
        try:
            return self.entries[attribute]
        except KeyError:
            raise KeyError(f"attribute {attribute!r} not in question map") from None


@dataclass(frozen=True)
class Answer:
    """A gold answer span: verbatim text plus its context offset."""

    text: str
    answer_start: int


def _answer_matches(context: str, answer: Answer) -> bool:
    end = answer.answer_start + len(answer.text)
    return 0 <= answer.answer_start and end <= len(context) and context[answer.answer_start : end] == answer.text


@dataclass(frozen=True)
class QARecord:
    """One extractive-QA instance in SQuAD-v2 semantics.

    Invariants enforced at construction: ``is_impossible`` holds exactly when
    ``answers`` is empty, and every answer is a verbatim substring of the
    context at its recorded offset.
    """

    id: str
    context: str
    question: str
    answers: tuple[Answer, ...] = ()
    is_impossible: bool = True
    attribute: str = ""
    source_ad_id: str = ""

    def __post_init__(self) -> None:
        answers = tuple(a if isinstance(a, Answer) else Answer(**a) for a in self.answers)
        object.__setattr__(self, "answers", answers)
        if self.is_impossible != (not answers):
            raise IntegrityError(
                f"record {self.id!r}: is_impossible must hold exactly when the answers list is empty"
            )
        bad = [a for a in answers if not _answer_matches(self.context, a)]
        if bad:
            detail = "; ".join(f"{a.text!r}@{a.answer_start}" for a in bad)
            raise IntegrityError(f"record {self.id!r}: answer offsets do not match context: {detail}")

    @property
    def answer_texts(self) -> tuple[str, ...]:
        return tuple(a.text for a in self.answers)


def make_record_id(ad_id: str, attribute: str) -> str:
    return f"{ad_id}::{attribute}"


def _split_record_id(record_id: str, title: str) -> tuple[str, str]:
    """Recover (source_ad_id, attribute) from a conventional record id."""
    if "::" in record_id:
        source, attribute = record_id.rsplit("::", 1)
        return source, attribute
    return title, ""


# ---------------------------------------------------------------------------
# SQuAD-v2 JSON


def _expect(mapping: object, key: str, kind: type, where: str) -> object:
    if not isinstance(mapping, dict):
        raise FormatError(f"{where}: expected an object, got {type(mapping).__name__}")
    if key not in mapping:
        raise FormatError(f"{where}: missing key {key!r}")
    value = mapping[key]
    if kind is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise FormatError(f"{where}.{key}: expected a number, got {type(value).__name__}")
    elif kind is int:
        if not isinstance(value, int) or isinstance(value, bool):
            raise FormatError(f"{where}.{key}: expected an integer, got {type(value).__name__}")
    elif not isinstance(value, kind):
        raise FormatError(f"{where}.{key}: expected {kind.__name__}, got {type(value).__name__}")
    return value


def load_squad_file(path: str | Path) -> list[QARecord]:
    """Load a SQuAD-v2 JSON file into records, offsets preserved exactly.

    Structure errors raise :class:`FormatError` naming the offending element;
    answer/offset inconsistencies raise :class:`IntegrityError` listing every
    affected record id. A missing ``is_impossible`` key is inferred from the
    answers list.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: not valid JSON: {exc}") from exc

    data = _expect(payload, "data", list, "$")
    raw: list[tuple[str, str, str, list[Answer], bool, str]] = []
    for i, article in enumerate(data):
        where_a = f"data[{i}]"
        title = str(article.get("title", "")) if isinstance(article, dict) else ""
        paragraphs = _expect(article, "paragraphs", list, where_a)
        for j, paragraph in enumerate(paragraphs):
            where_p = f"{where_a}.paragraphs[{j}]"
            context = _expect(paragraph, "context", str, where_p)
            qas = _expect(paragraph, "qas", list, where_p)
            for k, qa in enumerate(qas):
                where_q = f"{where_p}.qas[{k}]"
                qid = _expect(qa, "id", str, where_q)
                question = _expect(qa, "question", str, where_q)
                answers_raw = _expect(qa, "answers", list, where_q)
                answers = []
                for m, ans in enumerate(answers_raw):
                    where_ans = f"{where_q}.answers[{m}]"
                    text = _expect(ans, "text", str, where_ans)
                    start = _expect(ans, "answer_start", int, where_ans)
                    answers.append(Answer(text, start))
                impossible = bool(qa.get("is_impossible", not answers))
                raw.append((qid, context, question, answers, impossible, title))

    bad_ids = [
        qid
        for qid, context, _q, answers, impossible, _t in raw
        if impossible != (not answers) or any(not _answer_matches(context, a) for a in answers)
    ]
    if bad_ids:
        raise IntegrityError(f"{path}: answer offsets or is_impossible flags are inconsistent for records: " + ", ".join(bad_ids))

    records = []
    for qid, context, question, answers, impossible, title in raw:
        source_ad_id, attribute = _split_record_id(qid, title)
        records.append(
            QARecord(
                id=qid,
                context=context,
                question=question,
                answers=tuple(answers),
                is_impossible=impossible,
                attribute=attribute,
                source_ad_id=source_ad_id,
            )
        )
    return records


def save_squad_file(records: Sequence[QARecord], path: str | Path) -> None:
    """Write records to SQuAD-v2 JSON.

    Round-trip stable: ``load_squad_file(save_squad_file(R)) == R`` field for
    field, provided record ids follow the ``<ad_id>::<attribute>`` convention
    used throughout this package (loading recovers ``attribute`` and
    ``source_ad_id`` from the id, falling back to the article title).
    """
    data: list[dict] = []
    for record in records:
        qa = {
            "id": record.id,
            "question": record.question,
            "answers": [{"text": a.text, "answer_start": a.answer_start} for a in record.answers],
            "is_impossible": record.is_impossible,
        }
        if data and data[-1]["title"] == record.source_ad_id and data[-1]["paragraphs"][-1]["context"] == record.context:
            data[-1]["paragraphs"][-1]["qas"].append(qa)
        elif data and data[-1]["title"] == record.source_ad_id:
            data[-1]["paragraphs"].append({"context": record.context, "qas": [qa]})
        else:
            data.append({"title": record.source_ad_id, "paragraphs": [{"context": record.context, "qas": [qa]}]})

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        json.dump({"version": SQUAD_VERSION, "data": data}, fh, ensure_ascii=False, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Ad corpora (JSON lines, one ad per line)


def load_ads_jsonl(path: str | Path) -> list[AdDocument]:
    """Load an annotated ad corpus from JSON lines.

    Each line is an object with ``id``, ``text``, ``language``, optional
    ``annotations`` (list of ``{attribute, span_text, char_start}``) and
    optional ``metadata``.
    """
    path = Path(path)
    ads: list[AdDocument] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{where}: not valid JSON: {exc}") from exc
            ad_id = _expect(obj, "id", str, where)
            text = _expect(obj, "text", str, where)
            language = Language.parse(str(obj.get("language", "en")))
            annotations = []
            for n, ann in enumerate(obj.get("annotations", [])):
                where_ann = f"{where}.annotations[{n}]"
                annotations.append(
                    AttributeAnnotation(
                        attribute=str(_expect(ann, "attribute", str, where_ann)),
                        span_text=str(_expect(ann, "span_text", str, where_ann)),
                        char_start=int(_expect(ann, "char_start", int, where_ann)),
                    )
                )
            ads.append(
                AdDocument(
                    id=ad_id,
                    text=text,
                    language=language,
                    annotations=tuple(annotations),
                    metadata={str(k): str(v) for k, v in obj.get("metadata", {}).items()},
                )
            )
    duplicates = sorted(ad_id for ad_id, n in Counter(ad.id for ad in ads).items() if n > 1)
    if duplicates:
        raise IntegrityError(f"{path}: duplicate ad ids: " + ", ".join(duplicates))
    return ads


def save_ads_jsonl(ads: Iterable[AdDocument], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for ad in ads:
            obj = {
                "id": ad.id,
                "text": ad.text,
                "language": ad.language.value,
                "annotations": [
                    {"attribute": a.attribute, "span_text": a.span_text, "char_start": a.char_start}
                    for a in ad.annotations
                ],
                "metadata": dict(ad.metadata),
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# Attribute question maps (TSV: attribute<TAB>question)


def load_question_map(path: str | Path, language: Language | str = Language.EN) -> AttributeQuestionMap:
    """Load an attribute question map from UTF-8 TSV (``attribute<TAB>question``).

    Blank lines and lines starting with ``#`` are ignored.
    """
    path = Path(path)
    entries: dict[str, str] = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise FormatError(f"{path}:{lineno}: expected 'attribute<TAB>question', got {line!r}")
            attribute, question = parts[0].strip(), parts[1].strip()
            if attribute in entries:
                raise IntegrityError(f"{path}:{lineno}: duplicate attribute {attribute!r}")
            entries[attribute] = question
    return AttributeQuestionMap(entries=entries, language=Language.parse(language))


def save_question_map(qmap: AttributeQuestionMap, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for attribute, question in qmap.entries.items():
            fh.write(f"{attribute}\t{question}\n")


def load_builtin_question_map(language: Language | str = Language.EN) -> AttributeQuestionMap:
    """Load the question map shipped with the package (English only)."""
    language = Language.parse(language)
    name = f"questions_{language.value}.tsv"
    ref = resources.files("adqa").joinpath("data", name)
    if not ref.is_file():
        raise FileNotFoundError(f"no builtin question map for language {language.value!r}")
    entries: dict[str, str] = {}
    for line in ref.read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        attribute, question = line.split("\t")
        entries[attribute] = question
    return AttributeQuestionMap(entries=entries, language=language)


# ---------------------------------------------------------------------------
# Deterministic splitting and sampling support


def rank_key(seed: int, key: str) -> str:
    """Stable pseudo-random rank for a string key under a seed."""
    return hashlib.sha256(f"{seed}:{key}".encode("utf-8")).hexdigest()


def _round_half_up(x: float) -> int:
    return int(x + 0.5)


@dataclass(frozen=True)
class DatasetSplit:
    """A train/validation record partition, disjoint at the source-ad level."""

    train: tuple[QARecord, ...]
    validation: tuple[QARecord, ...]
    seed: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "train", tuple(self.train))
        object.__setattr__(self, "validation", tuple(self.validation))
        overlap = {r.source_ad_id for r in self.train} & {r.source_ad_id for r in self.validation}
        if overlap:
            raise IntegrityError("split leaks ads across sides: " + ", ".join(sorted(overlap)))


def split_by_ad(
    ads: Sequence[AdDocument], train_fraction: float, seed: int
) -> tuple[list[AdDocument], list[AdDocument]]:
    """Deterministically partition ads into (train, validation).

    Ads are ranked by a seeded hash of their id and the first
    ``round(train_fraction * N)`` (half-up) go to train. Both sides keep the
    input order.
    """
    if not ads:
        raise ValueError("ads must be non-empty")
    if not 0 < train_fraction < 1:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    ids = [ad.id for ad in ads]
    duplicates = sorted(i for i, n in Counter(ids).items() if n > 1)
    if duplicates:
        raise IntegrityError("duplicate ad ids: " + ", ".join(duplicates))
    n_train = _round_half_up(train_fraction * len(ads))
    ranked = sorted(ids, key=lambda i: (rank_key(seed, i), i))
    train_ids = set(ranked[:n_train])
    train = [ad for ad in ads if ad.id in train_ids]
    validation = [ad for ad in ads if ad.id not in train_ids]
    return train, validation


def split_records_by_ad(records: Sequence[QARecord], train_fraction: float, seed: int) -> DatasetSplit:
    """Partition QA records at source-ad granularity with the same hash rule
    as :func:`split_by_ad`, so ads and their records land on the same side."""
    if not records:
        raise ValueError("records must be non-empty")
    if not 0 < train_fraction < 1:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    ad_ids = list(dict.fromkeys(r.source_ad_id for r in records))
    n_train = _round_half_up(train_fraction * len(ad_ids))
    ranked = sorted(ad_ids, key=lambda i: (rank_key(seed, i), i))
    train_ids = set(ranked[:n_train])
    train = tuple(r for r in records if r.source_ad_id in train_ids)
    validation = tuple(r for r in records if r.source_ad_id not in train_ids)
    return DatasetSplit(train=train, validation=validation, seed=seed)


# ---------------------------------------------------------------------------
# Corpus statistics


@dataclass(frozen=True)
class CorpusStats:
    n_ads: int
    n_annotations: int
    per_attribute_counts: Mapping[str, int]
    per_language_counts: Mapping[str, int]

    def to_dict(self) -> dict:
        return {
            "n_ads": self.n_ads,
            "n_annotations": self.n_annotations,
            "per_attribute_counts": dict(self.per_attribute_counts),
            "per_language_counts": dict(self.per_language_counts),
        }


def corpus_stats(ads: Sequence[AdDocument]) -> CorpusStats:
    """Count ads, annotations, per-attribute and per-language totals."""
    per_attribute: Counter[str] = Counter()
    per_language: Counter[str] = Counter()
    for ad in ads:
        per_language[ad.language.value] += 1
        for ann in ad.annotations:
            per_attribute[ann.attribute] += 1
    return CorpusStats(
        n_ads=len(ads),
        n_annotations=sum(per_attribute.values()),
        per_attribute_counts=dict(sorted(per_attribute.items())),
        per_language_counts=dict(sorted(per_language.items())),
    )


# ---------------------------------------------------------------------------
# Hashing helpers used for provenance


def canonical_json(obj: object) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def stable_hash(payload: str | bytes) -> str:
    if isinstance(payload, str):
        payload = payload.encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


def record_to_dict(record: QARecord) -> dict:
    return {
        "id": record.id,
        "context": record.context,
        "question": record.question,
        "answers": [{"text": a.text, "answer_start": a.answer_start} for a in record.answers],
        "is_impossible": record.is_impossible,
        "attribute": record.attribute,
        "source_ad_id": record.source_ad_id,
    }


def records_digest(records: Iterable[QARecord]) -> str:
    """Content hash of a record list, used in run provenance."""
    return stable_hash(canonical_json([record_to_dict(r) for r in records]))
