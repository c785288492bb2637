"""Pseudo-perplexity of sentences and corpora under a masked language model.

A scorer reports, for each position of a tokenized sentence, the negative log
likelihood of the true token when that position is masked. Sentence
pseudo-perplexity is exp(mean NLL); corpus pseudo-perplexity weights by token
count (exp of the sum of all NLLs divided by the total number of tokens), so
it is invariant to how the corpus is chunked into sentences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Protocol, Sequence


class MaskedScorer(Protocol):
    def token_nll(self, sentence_tokens: Sequence[str], index: int) -> float:
        """NLL of the token at ``index`` given the sentence masked there."""
        ...


class UniformScorer:
    """Assigns every token probability 1/vocab_size; its corpus
    pseudo-perplexity is exactly the vocabulary size."""

    def __init__(self, vocab_size: int):
        if vocab_size < 1:
            raise ValueError(f"vocab_size must be >= 1, got {vocab_size}")
        self.vocab_size = vocab_size

    def token_nll(self, sentence_tokens: Sequence[str], index: int) -> float:
        return math.log(self.vocab_size)

    def tokenize(self, text: str) -> list[str]:
        return text.split()


def tokenize_for(scorer: object, text: str) -> list[str]:
    """Tokenize with the scorer's own tokenizer when it has one, else on
    whitespace."""
    tokenize = getattr(scorer, "tokenize", None)
    if callable(tokenize):
        return list(tokenize(text))
    return text.split()


def sentence_nlls(scorer: MaskedScorer, sentence: Sequence[str]) -> list[float]:
    if not sentence:
        raise ValueError("sentence must be non-empty")
    return [float(scorer.token_nll(sentence, i)) for i in range(len(sentence))]


def sentence_pseudo_perplexity(scorer: MaskedScorer, sentence: Sequence[str]) -> float:
    """exp of the mean per-position masked-token NLL."""
    nlls = sentence_nlls(scorer, sentence)
    return math.exp(sum(nlls) / len(nlls))


@dataclass(frozen=True)
class SentenceScore:
    n_tokens: int
    mean_nll: float


@dataclass(frozen=True)
class CorpusPerplexity:
    value: float
    total_tokens: int
    per_sentence: tuple[SentenceScore, ...]

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "total_tokens": self.total_tokens,
            "per_sentence": [{"n_tokens": s.n_tokens, "mean_nll": s.mean_nll} for s in self.per_sentence],
        }


def corpus_pseudo_perplexity(scorer: MaskedScorer, corpus: Sequence[Sequence[str]]) -> CorpusPerplexity:
    """Token-weighted pseudo-perplexity over a corpus of tokenized sentences."""
    if not corpus:
        raise ValueError("corpus must be non-empty")
    total_nll = 0.0
    total_tokens = 0
    per_sentence: list[SentenceScore] = []
    for sentence in corpus:
        nlls = sentence_nlls(scorer, sentence)
        total_nll += sum(nlls)
        total_tokens += len(nlls)
        per_sentence.append(SentenceScore(n_tokens=len(nlls), mean_nll=sum(nlls) / len(nlls)))
    return CorpusPerplexity(
        value=math.exp(total_nll / total_tokens),
        total_tokens=total_tokens,
        per_sentence=tuple(per_sentence),
    )


@dataclass(frozen=True)
class PerplexityRow:
    model_name: str
    pp: float
    total_tokens: int


def compare_models(
    corpus: Sequence[Sequence[str]],
    scorers: Mapping[str, MaskedScorer],
) -> list[PerplexityRow]:
    """Pseudo-perplexity of the corpus under each named scorer, ascending by
    perplexity (then name, for a stable order on ties)."""
    if not scorers:
        raise ValueError("need at least one scorer")
    rows = []
    for name, scorer in scorers.items():
        result = corpus_pseudo_perplexity(scorer, corpus)
        rows.append(PerplexityRow(model_name=name, pp=result.value, total_tokens=result.total_tokens))
    rows.sort(key=lambda r: (r.pp, r.model_name))
    return rows


def write_pp_table(rows: Sequence[PerplexityRow], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        fh.write("model_name\tpp\ttotal_tokens\n")
        for row in rows:
            fh.write(f"{row.model_name}\t{row.pp:.6f}\t{row.total_tokens}\n")
