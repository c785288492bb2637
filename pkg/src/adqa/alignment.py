"""Project gold answer spans into machine-translated contexts.

Translating a context and its answer independently often breaks the verbatim
guarantee, so the projected span is recovered by fuzzy search: slide a k-word
window over the translated context, score each window against the translated
answer with a normalized edit-distance ratio, widen the window up to four
times, then retry with the untranslated answer (helps for names and dates).
Matches below a 0.5 score floor are rejected and the record is discarded.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Protocol, Sequence

from .data import Answer, AttributeQuestionMap, Language, QARecord, stable_hash

logger = logging.getLogger(__name__)

MIN_MATCH_SCORE = 0.5
WINDOW_SWEEP = 5  # k, k+1, ..., k+4

_WORD = re.compile(r"\S+")


class TransportError(RuntimeError):
    """A translator backend failed; the operation is retryable."""


def _normalize_for_match(s: str) -> str:
    return " ".join(s.casefold().split())


def levenshtein(a: str, b: str) -> int:
    """Plain edit distance (insert/delete/substitute, unit costs)."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + (ca != cb)))
        previous = current
    return previous[-1]


def similarity(s1: str, s2: str) -> float:
    """Normalized edit-distance ratio in [0, 1] on case-folded,
    whitespace-collapsed strings; 1.0 iff they normalize equal."""
    n1 = _normalize_for_match(s1)
    n2 = _normalize_for_match(s2)
    if n1 == n2:
        return 1.0
    longest = max(len(n1), len(n2))
    return 1.0 - levenshtein(n1, n2) / longest


@dataclass(frozen=True)
class ProjectedSpan:
    """A recovered answer span inside a translated context."""

    span_text: str
    char_start: int
    score: float
    via: str = "translated"  # which query matched: "translated" or "source"


def word_spans(text: str) -> list[tuple[int, int]]:
    """(start, end) offsets of whitespace-delimited words."""
    return [(m.start(), m.end()) for m in _WORD.finditer(text)]


def word_count(text: str) -> int:
    return len(_WORD.findall(text))


def kgram_best_match(
    context: str,
    query: str,
    k: int,
    min_score: float = MIN_MATCH_SCORE,
) -> ProjectedSpan | None:
    """Best k-word window of the context by similarity to the query.

    Returns the highest-scoring window at or above ``min_score``, breaking
    ties toward the smallest char_start; None when no window qualifies or the
    context has fewer than k words.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    spans = word_spans(context)
    if len(spans) < k:
        return None
    best: ProjectedSpan | None = None
    for i in range(len(spans) - k + 1):
        start = spans[i][0]
        end = spans[i + k - 1][1]
        score = similarity(context[start:end], query)
        if score >= min_score and (best is None or score > best.score):
            best = ProjectedSpan(span_text=context[start:end], char_start=start, score=score)
    return best


@dataclass(frozen=True)
class AlignmentProblem:
    """One answer-projection task: recover the answer inside the translated
    context, starting from a window of ``k0`` words."""

    source_answer: str
    translated_context: str
    translated_answer: str
    k0: int
    result: ProjectedSpan | None = None

    def __post_init__(self) -> None:
        if self.k0 < 1:
            raise ValueError(f"k0 must be >= 1, got {self.k0}")

    @classmethod
    def build(cls, source_answer: str, translated_context: str, translated_answer: str) -> "AlignmentProblem":
        k0 = max(1, word_count(translated_answer), word_count(source_answer))
        return cls(
            source_answer=source_answer,
            translated_context=translated_context,
            translated_answer=translated_answer,
            k0=k0,
        )


def _sweep(context: str, query: str, k0: int, via: str) -> ProjectedSpan | None:
    best: ProjectedSpan | None = None
    for k in range(k0, k0 + WINDOW_SWEEP):
        match = kgram_best_match(context, query, k)
        if match is not None and (best is None or match.score > best.score):
            best = replace(match, via=via)
    return best


def project_answer(problem: AlignmentProblem) -> ProjectedSpan | None:
    """Recover the answer span, or None when nothing scores above the floor.

    Sweeps window sizes k0..k0+4 against the translated answer, keeping the
    best match; if none qualifies, repeats the sweep with the untranslated
    answer. Ties across window sizes resolve to the smallest k (and, within a
    k, to the leftmost window).
    """
    best = _sweep(problem.translated_context, problem.translated_answer, problem.k0, via="translated")
    if best is None:
        best = _sweep(problem.translated_context, problem.source_answer, problem.k0, via="source")
    return best


# ---------------------------------------------------------------------------
# Translators


class Translator(Protocol):
    def translate(self, text: str, src: Language, tgt: Language) -> str:
        ...


class IdentityTranslator:
    """Returns text unchanged; handy for fixtures and dry runs."""

    def translate(self, text: str, src: Language, tgt: Language) -> str:
        return text


class DictionaryTranslator:
    """Word-for-word substitution using a lookup table (case-insensitive keys).

    Deliberately crude, but deterministic; unmapped words pass through.
    """

    def __init__(self, table: dict[str, str]):
        self.table = {k.casefold(): v for k, v in table.items()}

    def translate(self, text: str, src: Language, tgt: Language) -> str:
        return re.sub(r"\w+", lambda m: self.table.get(m.group(0).casefold(), m.group(0)), text)


def _escape_tsv(value: str) -> str:
    return value.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n").replace("\r", "\\r")


def _unescape_tsv(value: str) -> str:
    out = []
    it = iter(range(len(value)))
    i = 0
    while i < len(value):
        ch = value[i]
        if ch == "\\" and i + 1 < len(value):
            nxt = value[i + 1]
            out.append({"\\": "\\", "t": "\t", "n": "\n", "r": "\r"}.get(nxt, nxt))
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


class CachingTranslator:
    """Disk-backed translator cache keyed by (source text, src, tgt).

    The cache is an append-only TSV (hash, src, tgt, input, output) so runs
    are reproducible offline. Without a backend, a cache miss raises
    :class:`TransportError`.
    """

    def __init__(self, cache_path: str | Path, backend: Translator | None = None):
        self.cache_path = Path(cache_path)
        self.backend = backend
        self._cache: dict[tuple[str, str, str], str] = {}
        if self.cache_path.exists():
            self._load()

    def _load(self) -> None:
        with self.cache_path.open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 5:
                    logger.warning("skipping malformed cache line in %s", self.cache_path)
                    continue
                _h, src, tgt, text, output = (_unescape_tsv(p) for p in parts)
                self._cache[(text, src, tgt)] = output

    def _append(self, text: str, src: str, tgt: str, output: str) -> None:
        self.cache_path.parent.mkdir(parents=True, exist_ok=True)
        digest = stable_hash(f"{src}\x00{tgt}\x00{text}")[:16]
        row = "\t".join(_escape_tsv(v) for v in (digest, src, tgt, text, output))
        with self.cache_path.open("a", encoding="utf-8") as fh:
            fh.write(row + "\n")

    def translate(self, text: str, src: Language, tgt: Language) -> str:
        key = (text, Language.parse(src).value, Language.parse(tgt).value)
        if key in self._cache:
            return self._cache[key]
        if self.backend is None:
            raise TransportError(f"translation cache miss for {src}->{tgt} and no backend configured")
        try:
            output = self.backend.translate(text, src, tgt)
        except TransportError:
            raise
        except Exception as exc:
            raise TransportError(f"translator backend failed: {exc}") from exc
        self._cache[key] = output
        self._append(key[0], key[1], key[2], output)
        return output


# ---------------------------------------------------------------------------
# Record-level alignment


def _project_answers(
    record: QARecord,
    translated_context: str,
    translator: Translator,
    src_lang: Language,
    tgt_lang: Language,
) -> tuple[list[tuple[Answer, str]], int]:
    """Translate and project each gold answer; returns (kept, n_discarded)."""
    kept: list[tuple[Answer, str]] = []
    discarded = 0
    for answer in record.answers:
        translated_answer = translator.translate(answer.text, src_lang, tgt_lang)
        problem = AlignmentProblem.build(
            source_answer=answer.text,
            translated_context=translated_context,
            translated_answer=translated_answer,
        )
        match = project_answer(problem)
        if match is None:
            discarded += 1
            continue
        kept.append((Answer(match.span_text, match.char_start), match.via))
    return kept, discarded


def align_record(
    src: QARecord,
    tgt_question: str,
    translator: Translator,
    src_lang: Language | str,
    tgt_lang: Language | str,
) -> QARecord | None:
    """Produce the translated counterpart of a record, or None if discarded.

    Impossible records only get their context translated and are always kept.
    Answerable records keep the answers whose spans project into the
    translated context; a record with no surviving answer is discarded. The
    question is replaced by ``tgt_question`` (questions are translated
    manually, there are few of them).
    """
    src_lang = Language.parse(src_lang)
    tgt_lang = Language.parse(tgt_lang)
    translated_context = translator.translate(src.context, src_lang, tgt_lang)
    if src.is_impossible:
        return QARecord(
            id=src.id,
            context=translated_context,
            question=tgt_question,
            answers=(),
            is_impossible=True,
            attribute=src.attribute,
            source_ad_id=src.source_ad_id,
        )
    kept, _ = _project_answers(src, translated_context, translator, src_lang, tgt_lang)
    if not kept:
        return None
    return QARecord(
        id=src.id,
        context=translated_context,
        question=tgt_question,
        answers=tuple(answer for answer, _via in kept),
        is_impossible=False,
        attribute=src.attribute,
        source_ad_id=src.source_ad_id,
    )


@dataclass
class AlignmentReport:
    """Projection outcome counts for one corpus pass."""

    total_answers: int = 0
    projected_via_translated: int = 0
    projected_via_source: int = 0
    discarded_answers: int = 0
    records_in: int = 0
    records_out: int = 0
    records_discarded: int = 0
    impossible_passed: int = 0

    def to_dict(self) -> dict:
        return dict(vars(self))


def align_corpus(
    records: Sequence[QARecord],
    tgt_qmap: AttributeQuestionMap,
    translator: Translator,
    src_lang: Language | str,
    tgt_lang: Language | str,
) -> tuple[list[QARecord], AlignmentReport]:
    """Translate a record set, projecting gold answers; questions come from
    the target-language question map keyed by each record's attribute."""
    src_lang = Language.parse(src_lang)
    tgt_lang = Language.parse(tgt_lang)
    report = AlignmentReport(records_in=len(records))
    out: list[QARecord] = []
    for record in records:
        question = tgt_qmap.question_for(record.attribute) if record.attribute else record.question
        translated_context = translator.translate(record.context, src_lang, tgt_lang)
        if record.is_impossible:
            report.impossible_passed += 1
            out.append(
                QARecord(
                    id=record.id,
                    context=translated_context,
                    question=question,
                    answers=(),
                    is_impossible=True,
                    attribute=record.attribute,
                    source_ad_id=record.source_ad_id,
                )
            )
            continue
        report.total_answers += len(record.answers)
        kept, discarded = _project_answers(record, translated_context, translator, src_lang, tgt_lang)
        report.discarded_answers += discarded
        report.projected_via_translated += sum(1 for _a, via in kept if via == "translated")
        report.projected_via_source += sum(1 for _a, via in kept if via == "source")
        if not kept:
            report.records_discarded += 1
            logger.info("discarding record %s: no answer projected above %.1f", record.id, MIN_MATCH_SCORE)
            continue
        out.append(
            QARecord(
                id=record.id,
                context=translated_context,
                question=question,
                answers=tuple(answer for answer, _via in kept),
                is_impossible=False,
                attribute=record.attribute,
                source_ad_id=record.source_ad_id,
            )
        )
    report.records_out = len(out)
    return out, report
