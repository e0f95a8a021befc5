"""AUC, curves, operating points, slices and CTR buckets."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from querypulse.errors import (
    InvalidValueError,
    PrecisionUnattainableError,
    UndefinedAucError,
)
from querypulse.evaluation import (
    auc,
    ctr_bucket_analysis,
    operating_point,
    pr_curve,
    roc_curve,
    slice_auc,
    trapezoid_roc_area,
)


def pairwise_auc(scores, labels):
    """Exhaustive P(pos > neg) + 0.5 P(pos == neg) over all pos/neg pairs."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


# quarter-step quantization keeps ties common while avoiding float scores so
# tiny that affine transforms stop being strictly monotone in float64
score_values = st.integers(0, 256).map(lambda v: v / 256.0)

score_sets = st.tuples(
    st.lists(score_values, min_size=2, max_size=60),
    st.randoms(use_true_random=False),
).map(
    lambda t: (t[0], [t[1].randint(0, 1) for _ in t[0]])
).filter(lambda t: 0 < sum(t[1]) < len(t[1]))


class TestAuc:
    def test_perfect_separation(self):
        assert auc([0.9, 0.8, 0.7, 0.1], [1, 1, 0, 0]) == 1.0

    def test_three_of_four_pairs(self):
        # pairs: (.8>.6) (.8>.2) (.4<.6) (.4>.2) -> 3 wins of 4
        assert auc([0.8, 0.4, 0.6, 0.2], [1, 1, 0, 0]) == 0.75

    def test_all_ties_is_half(self):
        assert auc([0.4] * 6, [1, 1, 1, 0, 0, 0]) == 0.5

    def test_one_class_rejected(self):
        with pytest.raises(UndefinedAucError):
            auc([0.1, 0.9], [1, 1])

    @settings(max_examples=150, deadline=None)
    @given(score_sets)
    def test_matches_pairwise_oracle(self, data):
        scores, labels = data
        assert auc(scores, labels) == pytest.approx(
            pairwise_auc(scores, labels), abs=1e-12
        )

    @settings(max_examples=60, deadline=None)
    @given(score_sets)
    def test_monotone_transform_invariance(self, data):
        scores, labels = data
        base = auc(scores, labels)
        assert auc([3 * s + 1 for s in scores], labels) == pytest.approx(base, abs=1e-12)
        assert auc(np.exp(scores), labels) == pytest.approx(base, abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(score_sets)
    def test_label_flip_complements(self, data):
        scores, labels = data
        flipped = [1 - y for y in labels]
        assert auc(scores, labels) + auc(scores, flipped) == pytest.approx(1.0, abs=1e-12)


class TestCurves:
    def test_roc_endpoints(self):
        points = roc_curve([0.8, 0.4, 0.6, 0.2], [1, 1, 0, 0])
        assert (points[0][1], points[0][2]) == (0.0, 0.0)
        assert (points[-1][1], points[-1][2]) == (1.0, 1.0)

    def test_perfect_roc_hits_top_left(self):
        points = roc_curve([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])
        assert any(fpr == 0.0 and tpr == 1.0 for _, fpr, tpr in points)

    def test_single_distinct_score_two_points(self):
        points = roc_curve([0.5, 0.5, 0.5], [1, 0, 1])
        assert len(points) == 2

    @settings(max_examples=80, deadline=None)
    @given(score_sets)
    def test_trapezoid_equals_rank_auc(self, data):
        scores, labels = data
        assert trapezoid_roc_area(scores, labels) == pytest.approx(
            auc(scores, labels), abs=1e-9
        )

    def test_pr_points_at_distinct_thresholds(self):
        points = pr_curve([0.9, 0.7, 0.7, 0.2], [1, 1, 0, 0])
        assert len(points) == 3
        threshold, recall, precision = points[0]
        assert (threshold, recall, precision) == (0.9, 0.5, 1.0)


class TestOperatingPoint:
    def test_perfect_classifier_full_recall(self):
        op = operating_point([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0], 0.85)
        assert op["recall"] == 1.0
        assert op["precision"] == 1.0

    def test_uniform_scores_unattainable(self):
        labels = [1] * 37 + [0] * 63
        scores = [0.5] * 100
        with pytest.raises(PrecisionUnattainableError) as exc_info:
            operating_point(scores, labels, 0.85)
        assert exc_info.value.max_precision == pytest.approx(0.37)

    def test_highest_recall_wins(self):
        scores = [0.9, 0.8, 0.7, 0.6, 0.5]
        labels = [1, 1, 1, 0, 1]
        op = operating_point(scores, labels, 0.75)
        # threshold 0.5 gives precision 0.8 recall 1.0; prefer it over 1.0/0.75
        assert op["recall"] == 1.0
        assert op["precision"] == pytest.approx(0.8)

    @settings(max_examples=80, deadline=None)
    @given(score_sets, st.floats(0.05, 1.0))
    def test_contract_precision_meets_target(self, data, target):
        scores, labels = data
        try:
            op = operating_point(scores, labels, target)
        except PrecisionUnattainableError as exc:
            assert 0.0 < exc.max_precision < target
            return
        assert op["precision"] >= target
        predicted = [s >= op["threshold"] for s in scores]
        tp = sum(1 for p, y in zip(predicted, labels) if p and y == 1)
        fp = sum(1 for p, y in zip(predicted, labels) if p and y == 0)
        assert tp / (tp + fp) == pytest.approx(op["precision"], abs=1e-12)


class TestSliceAuc:
    def test_single_slice_equals_overall(self):
        scores = [0.8, 0.4, 0.6, 0.2]
        labels = [1, 1, 0, 0]
        out = slice_auc(scores, labels, ["all"] * 4)
        assert out["all"]["auc"] == auc(scores, labels)
        assert out["all"]["n"] == 4

    def test_one_class_slice_undefined(self):
        out = slice_auc([0.9, 0.8, 0.3, 0.2], [1, 1, 1, 0], ["a", "a", "b", "b"])
        assert out["a"]["auc"] is None
        assert out["a"]["n_pos"] == 2
        assert out["b"]["auc"] is not None

    def test_easier_slice_scores_higher(self):
        rng = np.random.default_rng(0)
        labels = rng.integers(0, 2, 400)
        easy = labels + rng.normal(0, 0.1, 400)
        hard = labels + rng.normal(0, 1.5, 400)
        scores = np.concatenate([easy, hard])
        slices = ["easy"] * 400 + ["hard"] * 400
        out = slice_auc(scores, np.concatenate([labels, labels]), slices)
        assert out["easy"]["auc"] > out["hard"]["auc"]


class TestCtrBuckets:
    def test_rows_sum_to_one(self):
        ctr = {f"q{i}": i / 24 for i in range(25)}
        ratings = {f"q{i}": (i % 5) + 1 for i in range(25)}
        table = ctr_bucket_analysis(ctr, ratings)
        for row, count in zip(table.fractions, table.counts):
            if count:
                assert sum(row) == pytest.approx(1.0, abs=1e-9)

    def test_uniform_rating_rows_are_indicators(self):
        ctr = {f"q{i}": i / 9 for i in range(10)}
        ratings = {f"q{i}": 3 for i in range(10)}
        table = ctr_bucket_analysis(ctr, ratings)
        for row, count in zip(table.fractions, table.counts):
            if count:
                assert row[2] == 1.0

    def test_needs_five_queries(self):
        with pytest.raises(InvalidValueError):
            ctr_bucket_analysis({"a": 0.5}, {"a": 3})

    def test_boundary_value_falls_in_lower_bucket(self):
        ctr = {f"q{i}": v for i, v in enumerate([0.0, 0.2, 0.4, 0.6, 0.8, 1.0])}
        ratings = {f"q{i}": 1 for i in range(6)}
        table = ctr_bucket_analysis(ctr, ratings)
        assert table.counts == [2, 1, 1, 1, 1]
