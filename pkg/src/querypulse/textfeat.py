"""Query-text features: lengths, language-model perplexity, next-query
similarity, and lexicon-driven phrase flags.

The language model is an add-k smoothed n-gram model (bigram by default)
trained on the query log itself; perplexity is exact and reproducible, which
is the property the pipeline needs from it.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import ConfigError, EmptyCorpusError

START = "<s>"
END = "</s>"
UNK = "<unk>"


class NgramLanguageModel:
    """Add-k smoothed n-gram model over whitespace-tokenized queries."""

    def __init__(self, order: int = 2, smoothing_k: float = 0.1):
        if order < 1:
            raise ValueError("order must be >= 1")
        if smoothing_k <= 0:
            raise ValueError("smoothing_k must be > 0")
        self.order = order
        self.smoothing_k = smoothing_k
        self.vocabulary: set[str] = set()
        self.ngram_counts: Counter[tuple[str, ...]] = Counter()
        self.context_counts: Counter[tuple[str, ...]] = Counter()

    # -- training ----------------------------------------------------------

    def fit(self, queries: Iterable[str]) -> "NgramLanguageModel":
        n_seen = 0
        for query in queries:
            tokens = query.split()
            if not tokens:
                continue
            n_seen += 1
            self.vocabulary.update(tokens)
            padded = [START] * (self.order - 1) + tokens + [END]
            for i in range(self.order - 1, len(padded)):
                ngram = tuple(padded[i - self.order + 1 : i + 1])
                self.ngram_counts[ngram] += 1
                self.context_counts[ngram[:-1]] += 1
        if n_seen == 0:
            raise EmptyCorpusError("language model corpus is empty")
        self.vocabulary.add(END)
        return self

    # -- scoring -----------------------------------------------------------

    @property
    def _smoothed_vocab_size(self) -> int:
        return len(self.vocabulary) + 1  # plus the unknown token

    def _map_token(self, token: str) -> str:
        return token if token in self.vocabulary else UNK

    def log_prob(self, token: str, context: tuple[str, ...]) -> float:
        """log P(token | context) with add-k smoothing; always finite."""
        token = self._map_token(token)
        context = tuple(
            t if t == START or t in self.vocabulary else UNK for t in context
        )
        k = self.smoothing_k
        v = self._smoothed_vocab_size
        num = self.ngram_counts.get(context + (token,), 0) + k
        den = self.context_counts.get(context, 0) + k * v
        return math.log(num) - math.log(den)

    def sequence_log_prob(self, query: str) -> tuple[float, int]:
        """Total log-probability of the query plus end marker, and the number
        of scored tokens."""
        tokens = query.split()
        padded = [START] * (self.order - 1) + tokens + [END]
        total = 0.0
        scored = 0
        for i in range(self.order - 1, len(padded)):
            context = tuple(padded[i - self.order + 1 : i])
            total += self.log_prob(padded[i], context)
            scored += 1
        return total, scored

    # -- persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "order": self.order,
            "smoothing_k": self.smoothing_k,
            "vocabulary": sorted(self.vocabulary),
            "counts": {
                " ".join(ngram): count
                for ngram, count in sorted(self.ngram_counts.items())
            },
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "NgramLanguageModel":
        if obj.get("version") != 1:
            raise ConfigError(f"unsupported language model version: {obj.get('version')}")
        model = cls(order=obj["order"], smoothing_k=obj["smoothing_k"])
        model.vocabulary = set(obj["vocabulary"])
        for key, count in obj["counts"].items():
            ngram = tuple(key.split(" "))
            model.ngram_counts[ngram] = count
            model.context_counts[ngram[:-1]] += count
        return model

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "NgramLanguageModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def train_lm(
    queries: Sequence[str], order: int = 2, smoothing_k: float = 0.1
) -> NgramLanguageModel:
    """Train the query-log language model used for the perplexity feature."""
    return NgramLanguageModel(order=order, smoothing_k=smoothing_k).fit(queries)


def perplexity(model: NgramLanguageModel, query: str) -> float:
    """exp of the average negative log-probability per token (end marker
    included); always finite and >= 1."""
    if not query.split():
        raise ValueError("cannot score an empty query")
    total, scored = model.sequence_log_prob(query)
    return math.exp(-total / scored)


def query_similarity(q1: str, q2: str) -> float:
    """Jaccard similarity of the two queries' word sets."""
    w1, w2 = set(q1.split()), set(q2.split())
    if not w1 or not w2:
        raise ValueError("queries must be non-empty")
    return len(w1 & w2) / len(w1 | w2)


@dataclass(frozen=True)
class Lexicons:
    """Phrase lists behind the containsSP/MT/RS/Units flags."""

    specifiers: frozenset[str]
    modifiers: frozenset[str]
    range_specifiers: frozenset[str]
    units: frozenset[str]

    def __post_init__(self) -> None:
        for name in ("specifiers", "modifiers", "range_specifiers", "units"):
            phrases = getattr(self, name)
            if not phrases:
                raise ConfigError(f"lexicon {name!r} is empty")


def load_phrase_file(path: str | Path) -> frozenset[str]:
    """One phrase per line; '#' starts a comment; phrases are normalized."""
    phrases = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        phrases.add(" ".join(line.lower().split()))
    return frozenset(phrases)


def load_lexicons(directory: str | Path) -> Lexicons:
    directory = Path(directory)
    return Lexicons(
        specifiers=load_phrase_file(directory / "specifiers.txt"),
        modifiers=load_phrase_file(directory / "modifiers.txt"),
        range_specifiers=load_phrase_file(directory / "range_specifiers.txt"),
        units=load_phrase_file(directory / "units.txt"),
    )


def contains_phrase(query_tokens: Sequence[str], phrase: str) -> bool:
    """True when the phrase's tokens occur contiguously in the query."""
    needle = phrase.split()
    width = len(needle)
    if width == 0 or width > len(query_tokens):
        return False
    return any(
        list(query_tokens[i : i + width]) == needle
        for i in range(len(query_tokens) - width + 1)
    )


def detect_lexicon_flags(query: str, lexicons: Lexicons) -> dict[str, bool]:
    """Word-boundary-aligned phrase detection for all four lexicons."""
    tokens = query.split()

    def hit(phrases: frozenset[str]) -> bool:
        return any(contains_phrase(tokens, phrase) for phrase in phrases)

    return {
        "contains_sp": hit(lexicons.specifiers),
        "contains_mt": hit(lexicons.modifiers),
        "contains_rs": hit(lexicons.range_specifiers),
        "contains_units": hit(lexicons.units),
    }


def per_query_query_sim(
    sessions: Iterable[Sequence[str]],
) -> dict[str, float]:
    """Mean similarity of each query to the query that follows it in-session.

    Queries never followed by another query get no entry.
    """
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for session in sessions:
        for current, following in zip(session, session[1:]):
            sim = query_similarity(current, following)
            sums[current] = sums.get(current, 0.0) + sim
            counts[current] = counts.get(current, 0) + 1
    return {query: sums[query] / counts[query] for query in sums}


@dataclass(frozen=True)
class TextFeatures:
    """All Table-style text characteristics of one query."""

    char_query_len: int
    word_query_len: int
    lm_score: float
    query_sim: float | None
    contains_sp: bool
    contains_mt: bool
    contains_rs: bool
    contains_units: bool


def compute_text_features(
    query: str,
    model: NgramLanguageModel,
    lexicons: Lexicons,
    query_sim: Mapping[str, float] | None = None,
) -> TextFeatures:
    flags = detect_lexicon_flags(query, lexicons)
    return TextFeatures(
        char_query_len=len(query),
        word_query_len=len(query.split()),
        lm_score=perplexity(model, query),
        query_sim=None if query_sim is None else query_sim.get(query),
        **flags,
    )
