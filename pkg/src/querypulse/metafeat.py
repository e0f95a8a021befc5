"""Meta aspects of a query: lexicon-driven category and query-type stand-ins
plus weekly-volume segmentation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

from .errors import ConfigError
from .textfeat import contains_phrase, load_phrase_file


class QueryCategory(str, Enum):
    MOBILE_PHONES = "MobilePhones"
    BOOKS = "Books"
    ELECTRONICS = "Electronics"
    LIFESTYLE = "Lifestyle"
    HOME_AND_FURNITURE = "HomeAndFurniture"
    UNKNOWN = "Unknown"


class QueryType(str, Enum):
    PRODUCT = "Product"
    FACET_CATEGORY = "FacetCategory"
    CATEGORY = "Category"


class VolumeSegment(str, Enum):
    HEAD = "Head"
    TORSO_HIGH = "TorsoHigh"
    TORSO_BOTTOM = "TorsoBottom"


@dataclass(frozen=True)
class QueryMeta:
    query_cat: QueryCategory
    query_type: QueryType
    volume_segment: VolumeSegment


def load_category_lexicon(path: str | Path) -> dict[str, QueryCategory]:
    """Tab-separated ``phrase<TAB>category`` lines; '#' starts a comment."""
    lexicon: dict[str, QueryCategory] = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ConfigError(f"bad category lexicon line: {raw!r}")
        phrase = " ".join(parts[0].lower().split())
        try:
            category = QueryCategory(parts[1].strip())
        except ValueError as exc:
            raise ConfigError(f"unknown category in lexicon: {parts[1]!r}") from exc
        lexicon[phrase] = category
    if not lexicon:
        raise ConfigError(f"category lexicon {path} is empty")
    return lexicon


def classify_category(
    query: str, category_lexicon: Mapping[str, QueryCategory]
) -> QueryCategory:
    """Longest matching lexicon phrase decides the category; Unknown otherwise.

    Longest means most words, then most characters; remaining ties go to the
    lexicographically smallest phrase so the result is deterministic.
    """
    if not category_lexicon:
        raise ConfigError("category lexicon must be non-empty")
    tokens = query.split()
    matches = [
        phrase for phrase in category_lexicon if contains_phrase(tokens, phrase)
    ]
    if not matches:
        return QueryCategory.UNKNOWN
    best = min(matches, key=lambda p: (-len(p.split()), -len(p), p))
    return category_lexicon[best]


def classify_query_type(
    query: str,
    product_lexicon: frozenset[str],
    attribute_lexicon: frozenset[str],
    category_phrases: frozenset[str],
) -> QueryType:
    """Product-phrase match wins; attribute + category phrase means a facet
    query; everything else is a broad category query."""
    for lexicon, name in (
        (product_lexicon, "product"),
        (attribute_lexicon, "attribute"),
        (category_phrases, "category"),
    ):
        if not lexicon:
            raise ConfigError(f"{name} lexicon must be non-empty")
    tokens = query.split()
    if any(contains_phrase(tokens, phrase) for phrase in product_lexicon):
        return QueryType.PRODUCT
    has_attribute = any(contains_phrase(tokens, p) for p in attribute_lexicon)
    has_category = any(contains_phrase(tokens, p) for p in category_phrases)
    if has_attribute and has_category:
        return QueryType.FACET_CATEGORY
    return QueryType.CATEGORY


@dataclass(frozen=True)
class TypeLexicons:
    products: frozenset[str]
    attributes: frozenset[str]
    categories: frozenset[str]


def load_type_lexicons(directory: str | Path) -> TypeLexicons:
    directory = Path(directory)
    return TypeLexicons(
        products=load_phrase_file(directory / "products.txt"),
        attributes=load_phrase_file(directory / "attributes.txt"),
        categories=frozenset(load_category_lexicon(directory / "categories.tsv")),
    )


def assign_volume_segments(
    counts: Mapping[str, int],
    head_pct: float = 0.05,
    torso_pct: float = 0.50,
) -> dict[str, VolumeSegment]:
    """Partition queries into Head / TorsoHigh / TorsoBottom by weekly volume.

    Cutoffs are fractions of the rank-ordered query list (by count descending,
    ties by query string); the head always holds at least one query.
    """
    if not (0.0 < head_pct < torso_pct < 1.0):
        raise ConfigError("need 0 < head_pct < torso_pct < 1")
    ranked = sorted(counts, key=lambda q: (-counts[q], q))
    n = len(ranked)
    n_head = max(1, math.floor(head_pct * n))
    n_torso_end = max(n_head, math.floor(torso_pct * n))
    segments: dict[str, VolumeSegment] = {}
    for rank, query in enumerate(ranked):
        if rank < n_head:
            segments[query] = VolumeSegment.HEAD
        elif rank < n_torso_end:
            segments[query] = VolumeSegment.TORSO_HIGH
        else:
            segments[query] = VolumeSegment.TORSO_BOTTOM
    return segments


def segment_mean_counts(
    counts: Mapping[str, int], segments: Mapping[str, VolumeSegment]
) -> dict[VolumeSegment, float]:
    """Average weekly count per segment (0.0 for empty segments)."""
    sums: dict[VolumeSegment, list[int]] = {seg: [] for seg in VolumeSegment}
    for query, segment in segments.items():
        sums[segment].append(counts[query])
    return {
        seg: (sum(values) / len(values) if values else 0.0)
        for seg, values in sums.items()
    }
