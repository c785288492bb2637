"""Experiment regimes: zero/few-shot, semi-supervised, cross-lingual,
attribute holdout, and the prompt baseline, plus run persistence.

Every run returns a :class:`RegimeRunResult` whose provenance (seeds, config,
dataset hashes, backend fingerprints) is enough to replay it; with
deterministic backends a replay reproduces the metrics bit for bit.
"""

from __future__ import annotations

import json
import logging
import random
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

from .alignment import kgram_best_match, word_count
from .data import (
    Answer,
    IntegrityError,
    Language,
    QARecord,
    canonical_json,
    rank_key,
    records_digest,
    stable_hash,
)
from .metrics import MetricsReport, Prediction, evaluate, normalize, per_attribute_tsv
from .models import (
    BackendError,
    PromptModel,
    QAModel,
    TrainConfig,
    TrainableQAModel,
    fine_tune,
    predict_answer,
    predict_span,
)

logger = logging.getLogger(__name__)

PROMPT_TEMPLATE = (
    "Given the following passage: {context}, answer the following question. "
    "Note that the answer is present within the text. Question: {question}"
)


class RegimeKind(str, Enum):
    ZERO_SHOT = "zero_shot"
    FEW_SHOT = "few_shot"
    FURTHER_PRETRAIN = "further_pretrain"
    JOINT_MLM_QA = "joint_mlm_qa"
    TRI_TRAINING = "tri_training"
    XLING_SIMPLE = "xling_simple"
    XLING_MLM = "xling_mlm"
    ATTRIBUTE_HOLDOUT = "attribute_holdout"
    PROMPT_BASELINE = "prompt_baseline"


_BUDGETED_KINDS = {
    RegimeKind.FEW_SHOT,
    RegimeKind.FURTHER_PRETRAIN,
    RegimeKind.JOINT_MLM_QA,
    RegimeKind.TRI_TRAINING,
    RegimeKind.XLING_SIMPLE,
    RegimeKind.XLING_MLM,
}


@dataclass(frozen=True)
class RegimeSpec:
    """Descriptor of one experiment-grid cell."""

    kind: RegimeKind
    budget: int | None = None
    source_lang: Language = Language.EN
    target_lang: Language = Language.EN
    unlabeled_corpus_ref: str | None = None
    rounds: int | None = None
    attribute: str | None = None
    mapping: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", RegimeKind(self.kind))
        object.__setattr__(self, "source_lang", Language.parse(self.source_lang))
        object.__setattr__(self, "target_lang", Language.parse(self.target_lang))
        if self.kind in _BUDGETED_KINDS:
            if self.budget is None:
                raise ValueError(f"regime {self.kind.value} requires a budget (number of training ads)")
            if self.budget < 1:
                raise ValueError(f"budget must be >= 1, got {self.budget}")
        if self.rounds is not None and self.rounds < 1:
            raise ValueError(f"rounds must be >= 1, got {self.rounds}")
        if self.mapping is not None and self.mapping not in ("exact", "fuzzy"):
            raise ValueError(f"mapping must be 'exact' or 'fuzzy', got {self.mapping!r}")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "budget": self.budget,
            "source_lang": self.source_lang.value,
            "target_lang": self.target_lang.value,
            "unlabeled_corpus_ref": self.unlabeled_corpus_ref,
            "rounds": self.rounds,
            "attribute": self.attribute,
            "mapping": self.mapping,
        }


@dataclass(frozen=True)
class RegimeRunResult:
    spec: RegimeSpec
    metrics: MetricsReport
    model_fingerprint: str
    timing_seconds: float
    provenance: dict = field(default_factory=dict)

    @property
    def spec_hash(self) -> str:
        return self.provenance.get("spec_hash", "")


def _finish(
    spec: RegimeSpec,
    report: MetricsReport,
    fingerprint: str,
    started: float,
    provenance: dict,
) -> RegimeRunResult:
    provenance = dict(provenance)
    provenance["regime"] = spec.to_dict()
    provenance["model_fingerprint"] = fingerprint
    provenance["spec_hash"] = stable_hash(canonical_json(provenance))[:12]
    return RegimeRunResult(
        spec=spec,
        metrics=report,
        model_fingerprint=fingerprint,
        timing_seconds=time.perf_counter() - started,
        provenance=provenance,
    )


def predict_all(
    model: QAModel, records: Sequence[QARecord], null_threshold: float = 0.0
) -> list[Prediction]:
    return [predict_answer(model, record, null_threshold) for record in records]


def run_zero_shot(
    model: QAModel,
    eval_records: Sequence[QARecord],
    language: Language | str = Language.EN,
    null_threshold: float = 0.0,
    spec: RegimeSpec | None = None,
) -> RegimeRunResult:
    """Evaluate a model as-is, without any fine-tuning."""
    started = time.perf_counter()
    language = Language.parse(language)
    spec = spec or RegimeSpec(kind=RegimeKind.ZERO_SHOT, source_lang=language, target_lang=language)
    report = evaluate(predict_all(model, eval_records, null_threshold), eval_records, language=language)
    provenance = {
        "datasets": {"eval": records_digest(eval_records)},
        "null_threshold": null_threshold,
        "language": language.value,
    }
    return _finish(spec, report, model.fingerprint, started, provenance)


def n_distinct_ads(records: Sequence[QARecord]) -> int:
    return len({r.source_ad_id for r in records})


def sample_budget(train_records: Sequence[QARecord], budget_ads: int, seed: int) -> list[QARecord]:
    """Deterministically sample a training budget at ad granularity.

    Ads are ranked by a seeded hash of their id and the first ``budget_ads``
    are kept with all their records, so for a fixed seed smaller budgets are
    subsets of larger ones. Record order follows the input.
    """
    ad_ids = list(dict.fromkeys(r.source_ad_id for r in train_records))
    if budget_ads < 1:
        raise ValueError(f"budget must be >= 1, got {budget_ads}")
    if budget_ads > len(ad_ids):
        raise ValueError(f"budget {budget_ads} exceeds the {len(ad_ids)} available ads")
    ranked = sorted(ad_ids, key=lambda i: (rank_key(seed, i), i))
    chosen = set(ranked[:budget_ads])
    return [r for r in train_records if r.source_ad_id in chosen]


def run_few_shot(
    model: TrainableQAModel,
    train_records: Sequence[QARecord],
    eval_records: Sequence[QARecord],
    config: TrainConfig,
    language: Language | str = Language.EN,
    null_threshold: float = 0.0,
    spec: RegimeSpec | None = None,
) -> RegimeRunResult:
    """Fine-tune on the (budgeted) training records, then evaluate."""
    started = time.perf_counter()
    language = Language.parse(language)
    spec = spec or RegimeSpec(
        kind=RegimeKind.FEW_SHOT,
        budget=n_distinct_ads(train_records),
        source_lang=language,
        target_lang=language,
    )
    trained = fine_tune(model, train_records, config)
    report = evaluate(predict_all(trained, eval_records, null_threshold), eval_records, language=language)
    provenance = {
        "datasets": {"train": records_digest(train_records), "eval": records_digest(eval_records)},
        "train_config": config.to_dict(),
        "null_threshold": null_threshold,
        "language": language.value,
        "initial_fingerprint": model.fingerprint,
    }
    return _finish(spec, report, trained.fingerprint, started, provenance)


def run_further_pretrain(
    model: TrainableQAModel,
    unlabeled_texts: Sequence[str],
    train_records: Sequence[QARecord],
    eval_records: Sequence[QARecord],
    config: TrainConfig,
    language: Language | str = Language.EN,
    null_threshold: float = 0.0,
    spec: RegimeSpec | None = None,
) -> RegimeRunResult:
    """MLM phase on unlabeled text, then the standard fine-tune, then
    evaluation; phases are recorded in order in the provenance."""
    if not unlabeled_texts:
        raise ValueError("unlabeled corpus must be non-empty")
    started = time.perf_counter()
    language = Language.parse(language)
    spec = spec or RegimeSpec(
        kind=RegimeKind.FURTHER_PRETRAIN,
        budget=n_distinct_ads(train_records),
        source_lang=language,
        target_lang=language,
    )
    pretrained = model.mlm_train(unlabeled_texts, config)
    trained = fine_tune(pretrained, train_records, config)
    report = evaluate(predict_all(trained, eval_records, null_threshold), eval_records, language=language)
    provenance = {
        "datasets": {
            "train": records_digest(train_records),
            "eval": records_digest(eval_records),
            "unlabeled_texts": stable_hash(canonical_json(list(unlabeled_texts))),
        },
        "train_config": config.to_dict(),
        "null_threshold": null_threshold,
        "language": language.value,
        "initial_fingerprint": model.fingerprint,
        "phases": ["mlm", "qa"],
    }
    return _finish(spec, report, trained.fingerprint, started, provenance)


def run_joint_mlm_qa(
    model: TrainableQAModel,
    unlabeled_texts: Sequence[str],
    train_records: Sequence[QARecord],
    eval_records: Sequence[QARecord],
    config: TrainConfig,
    language: Language | str = Language.EN,
    null_threshold: float = 0.0,
    spec: RegimeSpec | None = None,
) -> RegimeRunResult:
    """Train QA and MLM objectives simultaneously (interleaved 1:1 steps,
    batch split across the objectives), then evaluate."""
    if not unlabeled_texts:
        raise ValueError("unlabeled corpus must be non-empty")
    started = time.perf_counter()
    language = Language.parse(language)
    spec = spec or RegimeSpec(
        kind=RegimeKind.JOINT_MLM_QA,
        budget=n_distinct_ads(train_records),
        source_lang=language,
        target_lang=language,
    )
    if not train_records:
        raise ValueError("cannot train on an empty record list")
    trained = model.train_joint(train_records, unlabeled_texts, config)
    report = evaluate(predict_all(trained, eval_records, null_threshold), eval_records, language=language)
    qa_half, mlm_half = config.joint_batch_sizes()
    provenance = {
        "datasets": {
            "train": records_digest(train_records),
            "eval": records_digest(eval_records),
            "unlabeled_texts": stable_hash(canonical_json(list(unlabeled_texts))),
        },
        "train_config": config.to_dict(),
        "null_threshold": null_threshold,
        "language": language.value,
        "initial_fingerprint": model.fingerprint,
        "schedule": {"objectives": ["qa", "mlm"], "pattern": "alternate_1to1", "batch_split": [qa_half, mlm_half]},
    }
    return _finish(spec, report, trained.fingerprint, started, provenance)


# ---------------------------------------------------------------------------
# Tri-training


def normalized_answer(text: str, language: Language) -> str:
    return " ".join(normalize(text, language))


def agreement_label(texts: Sequence[str], language: Language) -> tuple[str | None, int]:
    """Label agreed on by at least two of the texts (metric-normalized), with
    its vote count; (None, 0) when all disagree."""
    normalized = [normalized_answer(t, language) for t in texts]
    counts: dict[str, int] = {}
    for value in normalized:
        counts[value] = counts.get(value, 0) + 1
    winner = max(counts.items(), key=lambda kv: kv[1])
    if winner[1] >= 2:
        return winner
    return None, 0


def _derived_seed(base: int, *parts: object) -> int:
    return int(stable_hash(":".join([str(base), *map(str, parts)]))[:12], 16)


def run_tri_training(
    factory: Callable[[], TrainableQAModel],
    labeled: Sequence[QARecord],
    unlabeled: Sequence[QARecord],
    eval_records: Sequence[QARecord],
    config: TrainConfig,
    rounds: int = 1,
    language: Language | str = Language.EN,
    null_threshold: float = 0.0,
    spec: RegimeSpec | None = None,
) -> RegimeRunResult:
    """Self-label the unlabeled pool by majority vote of three models.

    Each round trains three models on bootstrap resamples of the current
    labeled set (distinct derived seeds), has every model predict every
    pooled record, and adopts records on which at least two models agree
    (comparing metric-normalized answers; an agreed empty answer adopts the
    record as impossible). Adopted records leave the pool and join the
    labeled set, which therefore only ever grows. A fresh model trained on
    the final labeled set is evaluated.
    """
    if rounds < 1:
        raise ValueError(f"rounds must be >= 1, got {rounds}")
    started = time.perf_counter()
    language = Language.parse(language)
    spec = spec or RegimeSpec(
        kind=RegimeKind.TRI_TRAINING,
        budget=n_distinct_ads(labeled),
        source_lang=language,
        target_lang=language,
        rounds=rounds,
    )

    current = list(labeled)
    pool = list(unlabeled)
    adopted_log: list[dict] = []
    adopted_per_round: list[int] = []
    labeled_sizes = [len(current)]

    for round_index in range(rounds):
        members = []
        for member_index in range(3):
            seed = _derived_seed(config.seed, "tri", round_index, member_index)
            sample = random.Random(seed).choices(current, k=len(current))
            try:
                member = factory()
            except Exception as exc:
                raise BackendError(f"tri-training model factory failed in round {round_index}: {exc}") from exc
            members.append(fine_tune(member, sample, replace(config, seed=seed)))

        remaining: list[QARecord] = []
        n_adopted = 0
        for record in pool:
            spans = [predict_span(member, record, null_threshold) for member in members]
            label, votes = agreement_label([s.span_text for s in spans], language)
            if label is None:
                remaining.append(record)
                continue
            n_adopted += 1
            if label == "":
                adopted = QARecord(
                    id=record.id,
                    context=record.context,
                    question=record.question,
                    answers=(),
                    is_impossible=True,
                    attribute=record.attribute,
                    source_ad_id=record.source_ad_id,
                )
                answer_text = ""
            else:
                winning = next(s for s in spans if normalized_answer(s.span_text, language) == label)
                adopted = QARecord(
                    id=record.id,
                    context=record.context,
                    question=record.question,
                    answers=(Answer(winning.span_text, winning.char_start),),
                    is_impossible=False,
                    attribute=record.attribute,
                    source_ad_id=record.source_ad_id,
                )
                answer_text = winning.span_text
            current.append(adopted)
            adopted_log.append(
                {"round": round_index, "record_id": record.id, "answer": answer_text, "votes": votes}
            )
        pool = remaining
        adopted_per_round.append(n_adopted)
        labeled_sizes.append(len(current))

    try:
        final_model = factory()
    except Exception as exc:
        raise BackendError(f"tri-training model factory failed for the final model: {exc}") from exc
    trained = fine_tune(final_model, current, config)
    report = evaluate(predict_all(trained, eval_records, null_threshold), eval_records, language=language)
    provenance = {
        "datasets": {
            "labeled": records_digest(labeled),
            "unlabeled": records_digest(unlabeled),
            "eval": records_digest(eval_records),
        },
        "train_config": config.to_dict(),
        "null_threshold": null_threshold,
        "language": language.value,
        "tri_training": {
            "rounds": rounds,
            "adopted_per_round": adopted_per_round,
            "labeled_sizes": labeled_sizes,
            "adopted": adopted_log,
        },
    }
    return _finish(spec, report, trained.fingerprint, started, provenance)


def run_cross_lingual(
    model: TrainableQAModel,
    src_train: Sequence[QARecord],
    tgt_eval: Sequence[QARecord],
    mode: str,
    tgt_unlabeled_texts: Sequence[str] | None,
    config: TrainConfig,
    source_lang: Language | str = Language.EN,
    target_lang: Language | str = Language.FR,
    null_threshold: float = 0.0,
    spec: RegimeSpec | None = None,
) -> RegimeRunResult:
    """Train on source-language records, evaluate on the target language.

    ``mode="simple"`` is plain fine-tuning; ``mode="mlm"`` additionally trains
    an MLM objective on unlabeled target-language text (joint objectives).
    """
    if mode not in ("simple", "mlm"):
        raise ValueError(f"mode must be 'simple' or 'mlm', got {mode!r}")
    if mode == "mlm" and not tgt_unlabeled_texts:
        raise ValueError("mlm cross-lingual mode requires unlabeled target-language texts")
    started = time.perf_counter()
    source_lang = Language.parse(source_lang)
    target_lang = Language.parse(target_lang)
    kind = RegimeKind.XLING_SIMPLE if mode == "simple" else RegimeKind.XLING_MLM
    spec = spec or RegimeSpec(
        kind=kind,
        budget=n_distinct_ads(src_train),
        source_lang=source_lang,
        target_lang=target_lang,
    )
    if not src_train:
        raise ValueError("cannot train on an empty record list")
    if mode == "simple":
        trained = fine_tune(model, src_train, config)
    else:
        trained = model.train_joint(src_train, list(tgt_unlabeled_texts or []), config)
    report = evaluate(predict_all(trained, tgt_eval, null_threshold), tgt_eval, language=target_lang)
    provenance = {
        "datasets": {
            "train": records_digest(src_train),
            "eval": records_digest(tgt_eval),
            "unlabeled_texts": stable_hash(canonical_json(list(tgt_unlabeled_texts)))
            if tgt_unlabeled_texts
            else None,
        },
        "train_config": config.to_dict(),
        "null_threshold": null_threshold,
        "language": target_lang.value,
        "mode": mode,
        "initial_fingerprint": model.fingerprint,
    }
    return _finish(spec, report, trained.fingerprint, started, provenance)


# ---------------------------------------------------------------------------
# Attribute holdout


@dataclass(frozen=True)
class HoldoutPair:
    """F1 on one attribute for a standard model vs one trained without it."""

    attribute: str
    trained_f1: float
    heldout_f1: float
    n: int


def _attribute_f1(
    model: QAModel, records: Sequence[QARecord], language: Language, null_threshold: float
) -> float:
    report = evaluate(predict_all(model, records, null_threshold), records, language=language)
    return report.f1


def run_attribute_holdout(
    model_factory: Callable[[], TrainableQAModel],
    train_records: Sequence[QARecord],
    eval_records: Sequence[QARecord],
    attribute: str,
    config: TrainConfig,
    language: Language | str = Language.EN,
    null_threshold: float = 0.0,
) -> HoldoutPair:
    """Generalization probe: F1 on one attribute's eval records for a model
    trained with vs without that attribute's training records."""
    language = Language.parse(language)
    eval_subset = [r for r in eval_records if r.attribute == attribute]
    if not eval_subset:
        raise ValueError(f"attribute {attribute!r} not present in the evaluation records")
    heldout_train = [r for r in train_records if r.attribute != attribute]
    standard = fine_tune(model_factory(), train_records, config)
    holdout = fine_tune(model_factory(), heldout_train, config)
    return HoldoutPair(
        attribute=attribute,
        trained_f1=_attribute_f1(standard, eval_subset, language, null_threshold),
        heldout_f1=_attribute_f1(holdout, eval_subset, language, null_threshold),
        n=len(eval_subset),
    )


def run_attribute_holdout_all(
    model_factory: Callable[[], TrainableQAModel],
    train_records: Sequence[QARecord],
    eval_records: Sequence[QARecord],
    config: TrainConfig,
    language: Language | str = Language.EN,
    null_threshold: float = 0.0,
) -> list[HoldoutPair]:
    """Holdout pairs for every attribute present in the eval records (training
    the standard model once)."""
    language = Language.parse(language)
    attributes = list(dict.fromkeys(r.attribute for r in eval_records))
    standard = fine_tune(model_factory(), train_records, config)
    pairs: list[HoldoutPair] = []
    for attribute in attributes:
        eval_subset = [r for r in eval_records if r.attribute == attribute]
        heldout_train = [r for r in train_records if r.attribute != attribute]
        holdout = fine_tune(model_factory(), heldout_train, config)
        pairs.append(
            HoldoutPair(
                attribute=attribute,
                trained_f1=_attribute_f1(standard, eval_subset, language, null_threshold),
                heldout_f1=_attribute_f1(holdout, eval_subset, language, null_threshold),
                n=len(eval_subset),
            )
        )
    return pairs


# ---------------------------------------------------------------------------
# Prompt baseline


def map_generation_to_span(context: str, generation: str, mapping: str = "exact") -> str:
    """Map generated text back onto a context span; "" when nothing maps.

    "exact" accepts only a verbatim substring; "fuzzy" takes the best k-word
    window of the context (k = generation word count) above the usual score
    floor.
    """
    if mapping not in ("exact", "fuzzy"):
        raise ValueError(f"mapping must be 'exact' or 'fuzzy', got {mapping!r}")
    generation = generation.strip()
    if not generation:
        return ""
    if mapping == "exact":
        return generation if generation in context else ""
    match = kgram_best_match(context, generation, max(1, word_count(generation)))
    return match.span_text if match else ""


def run_prompt_baseline(
    pm: PromptModel,
    eval_records: Sequence[QARecord],
    mapping: str = "exact",
    language: Language | str = Language.EN,
    spec: RegimeSpec | None = None,
) -> RegimeRunResult:
    """Prompt a generative model per record and map generations onto spans;
    unmapped generations count as predicted no-answer."""
    started = time.perf_counter()
    language = Language.parse(language)
    spec = spec or RegimeSpec(
        kind=RegimeKind.PROMPT_BASELINE, source_lang=language, target_lang=language, mapping=mapping
    )
    preds = []
    for record in eval_records:
        prompt = PROMPT_TEMPLATE.format(context=record.context, question=record.question)
        try:
            generation = pm.generate(prompt)
        except Exception as exc:
            raise BackendError(f"prompt backend failed on record {record.id!r}: {exc}") from exc
        preds.append(Prediction(record_id=record.id, text=map_generation_to_span(record.context, generation, mapping)))
    report = evaluate(preds, eval_records, language=language)
    provenance = {
        "datasets": {"eval": records_digest(eval_records)},
        "language": language.value,
        "mapping": mapping,
        "prompt_template": PROMPT_TEMPLATE,
    }
    return _finish(spec, report, pm.fingerprint, started, provenance)


# ---------------------------------------------------------------------------
# Run persistence


def _unique_dir(root: Path, name: str) -> Path:
    candidate = root / name
    suffix = 1
    while candidate.exists():
        candidate = root / f"{name}-{suffix}"
        suffix += 1
    return candidate


def persist_run(result: RegimeRunResult, runs_root: str | Path, figures: bool = True) -> Path:
    """Persist one run under ``runs/<timestamp>-<spec-hash>/``.

    metrics.json and config.json carry only deterministic content (replaying
    the same spec and seed with deterministic backends reproduces them byte
    for byte); timing and progress go to log.txt.
    """
    runs_root = Path(runs_root)
    runs_root.mkdir(parents=True, exist_ok=True)
    stamp = time.strftime("%Y%m%dT%H%M%S")
    run_dir = _unique_dir(runs_root, f"{stamp}-{result.spec_hash or 'run'}")
    run_dir.mkdir()

    (run_dir / "config.json").write_text(
        json.dumps(result.provenance, ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    (run_dir / "metrics.json").write_text(
        json.dumps(result.metrics.to_dict(), ensure_ascii=False, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    (run_dir / "per_attribute.tsv").write_text(per_attribute_tsv(result.metrics), encoding="utf-8")

    adopted = result.provenance.get("tri_training", {}).get("adopted")
    if adopted is not None:
        lines = ["round\trecord_id\tanswer\tvotes"]
        for row in adopted:
            answer = str(row["answer"]).replace("\t", " ").replace("\n", " ")
            lines.append(f"{row['round']}\t{row['record_id']}\t{answer}\t{row['votes']}")
        (run_dir / "adopted_pseudolabels.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    log_lines = [
        f"{time.strftime('%Y-%m-%dT%H:%M:%S')} regime={result.spec.kind.value} spec_hash={result.spec_hash}",
        f"f1={result.metrics.f1:.4f} exact_match={result.metrics.exact_match:.4f} n={result.metrics.n}",
        f"model_fingerprint={result.model_fingerprint}",
        f"timing_seconds={result.timing_seconds:.3f}",
    ]
    (run_dir / "log.txt").write_text("\n".join(log_lines) + "\n", encoding="utf-8")

    if figures:
        from . import plotting

        if result.metrics.per_attribute:
            plotting.plot_attribute_f1(result.metrics.per_attribute, run_dir / "per_attribute.png")
        if result.metrics.per_length_bucket:
            plotting.plot_length_buckets(result.metrics.per_length_bucket, run_dir / "length_buckets.png")
    return run_dir


def load_run(run_dir: str | Path) -> tuple[dict, dict]:
    """(provenance, metrics) dictionaries of a persisted run."""
    run_dir = Path(run_dir)
    try:
        provenance = json.loads((run_dir / "config.json").read_text(encoding="utf-8"))
        metrics = json.loads((run_dir / "metrics.json").read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise IntegrityError(f"{run_dir} is not a run directory: {exc}") from exc
    return provenance, metrics
