"""Category/type stand-ins and volume segmentation."""

import pytest

from querypulse.errors import ConfigError
from querypulse.metafeat import (
    QueryCategory,
    QueryType,
    VolumeSegment,
    assign_volume_segments,
    classify_category,
    classify_query_type,
    segment_mean_counts,
)

CATEGORY_LEXICON = {
    "iphone": QueryCategory.MOBILE_PHONES,
    "dining table": QueryCategory.HOME_AND_FURNITURE,
    "table": QueryCategory.ELECTRONICS,  # deliberately conflicting shorter phrase
    "shoes": QueryCategory.LIFESTYLE,
}
PRODUCTS = frozenset({"iphone x", "galaxy s9"})
ATTRIBUTES = frozenset({"red", "blue", "wooden"})
CATEGORIES = frozenset({"shoes", "dining table", "phone"})


class TestClassifyCategory:
    def test_direct_match(self):
        assert classify_category("iphone x 64gb", CATEGORY_LEXICON) is QueryCategory.MOBILE_PHONES

    def test_longest_phrase_wins(self):
        got = classify_category("wooden dining table", CATEGORY_LEXICON)
        assert got is QueryCategory.HOME_AND_FURNITURE

    def test_no_match(self):
        assert classify_category("zzz", CATEGORY_LEXICON) is QueryCategory.UNKNOWN

    def test_empty_lexicon_rejected(self):
        with pytest.raises(ConfigError):
            classify_category("shoes", {})


class TestClassifyQueryType:
    def test_product(self):
        assert classify_query_type("iphone x", PRODUCTS, ATTRIBUTES, CATEGORIES) is QueryType.PRODUCT

    def test_facet_category(self):
        got = classify_query_type("red nike shoes", PRODUCTS, ATTRIBUTES, CATEGORIES)
        assert got is QueryType.FACET_CATEGORY

    def test_category(self):
        assert classify_query_type("shoes", PRODUCTS, ATTRIBUTES, CATEGORIES) is QueryType.CATEGORY

    def test_attribute_without_category_is_category(self):
        got = classify_query_type("red thing", PRODUCTS, ATTRIBUTES, CATEGORIES)
        assert got is QueryType.CATEGORY


class TestAssignVolumeSegments:
    def test_default_cutoff_arithmetic(self):
        counts = {f"q{i:03d}": 1000 - i for i in range(100)}
        segments = assign_volume_segments(counts)
        tally = {seg: 0 for seg in VolumeSegment}
        for seg in segments.values():
            tally[seg] += 1
        assert tally[VolumeSegment.HEAD] == 5
        assert tally[VolumeSegment.TORSO_HIGH] == 45
        assert tally[VolumeSegment.TORSO_BOTTOM] == 50

    def test_single_query_is_head(self):
        assert assign_volume_segments({"a": 3}) == {"a": VolumeSegment.HEAD}

    def test_equal_counts_tie_break_is_deterministic(self):
        counts = {q: 10 for q in "abcdefghij"}
        first = assign_volume_segments(counts, head_pct=0.2, torso_pct=0.5)
        second = assign_volume_segments(dict(reversed(list(counts.items()))),
                                        head_pct=0.2, torso_pct=0.5)
        assert first == second
        assert first["a"] is VolumeSegment.HEAD  # smallest string ranks first

    def test_partition_and_mean_ordering(self):
        counts = {f"q{i:04d}": max(1, round(5000 / (i + 1))) for i in range(200)}
        segments = assign_volume_segments(counts)
        assert set(segments) == set(counts)
        means = segment_mean_counts(counts, segments)
        assert means[VolumeSegment.HEAD] >= means[VolumeSegment.TORSO_HIGH]
        assert means[VolumeSegment.TORSO_HIGH] >= means[VolumeSegment.TORSO_BOTTOM]

    def test_bad_cutoffs_rejected(self):
        with pytest.raises(ConfigError):
            assign_volume_segments({"a": 1}, head_pct=0.6, torso_pct=0.5)
