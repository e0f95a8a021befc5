"""Encoding of per-query features into the classifier's one-hot row.

Numeric features are binned into ten percentile buckets (cut points learned
from the training split only) with a dedicated absent bin, categoricals are
one-hot with an Unknown level, booleans are single indicators, and configured
feature pairs add a joint-bin one-hot interaction block.
"""

from __future__ import annotations

import bisect
import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, InvalidRatingError, StratificationError
from .metrics import METRIC_FIELDS, RATE_FIELDS, STAT_NAMES


class Label(str, Enum):
    SAT = "SAT"
    DSAT = "DSAT"


#: DSAT is the positive class: interventions target dissatisfied queries.
POSITIVE_LABEL = Label.DSAT

NUMERIC_FEATURES: tuple[str, ...] = tuple(
    f"{name}_{stat}" for name, _, _ in METRIC_FIELDS for stat in STAT_NAMES
) + RATE_FIELDS + ("query_count", "char_query_len", "word_query_len", "lm_score", "query_sim")

BOOLEAN_FEATURES: tuple[str, ...] = (
    "contains_sp",
    "contains_mt",
    "contains_rs",
    "contains_units",
)

CATEGORICAL_LEVELS: dict[str, tuple[str, ...]] = {
    "query_cat": (
        "MobilePhones", "Books", "Electronics", "Lifestyle",
        "HomeAndFurniture", "Unknown",
    ),
    "query_type": ("Product", "FacetCategory", "Category", "Unknown"),
    "volume_segment": ("Head", "TorsoHigh", "TorsoBottom", "Unknown"),
}

DEFAULT_INTERACTIONS: tuple[tuple[str, str], ...] = (
    ("click_success_rate", "query_count"),
)

N_PERCENTILE_BINS = 10


def map_label(rating: int) -> Label:
    """Ratings 1..3 are DSAT, 4..5 are SAT."""
    if rating not in (1, 2, 3, 4, 5):
        raise InvalidRatingError(f"rating must be in 1..5, got {rating!r}")
    return Label.DSAT if rating <= 3 else Label.SAT


@dataclass(frozen=True)
class QueryFeatureRecord:
    """One classifier row before encoding: raw feature values plus label.

    Rating and label are None on the scoring path, where queries arrive
    without editorial judgments.
    """

    normalized_query: str
    rating: int | None
    label: Label | None
    numeric: dict[str, float | None]
    booleans: dict[str, bool]
    categorical: dict[str, str]


def fit_bins(values: Sequence[float]) -> list[float]:
    """Decile cut points (type-7 interpolation) with duplicates collapsed."""
    if len(values) == 0:
        return []
    arr = np.asarray(values, dtype=np.float64)
    qs = np.arange(1, N_PERCENTILE_BINS) * (100.0 / N_PERCENTILE_BINS)
    cuts = np.percentile(arr, qs)
    return [float(c) for c in np.unique(cuts)]


def bin_index(value: float | None, cuts: Sequence[float]) -> int:
    """Bin of a value under the fitted cuts; the last index is the absent bin.

    A value equal to a cut point goes into the lower bin.
    """
    if value is None:
        return len(cuts) + 1
    return bisect.bisect_left(cuts, value)


@dataclass
class FeatureScheme:
    """Fitted encoding: per-feature cut points plus the indicator layout."""

    cuts: dict[str, list[float]]
    interactions: tuple[tuple[str, str], ...] = DEFAULT_INTERACTIONS
    indicator_names: list[str] = field(default_factory=list)
    _offsets: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        for pair in self.interactions:
            for name in pair:
                if name not in NUMERIC_FEATURES:
                    raise ConfigError(f"interaction refers to unknown feature {name!r}")
        if not self.indicator_names:
            self._build_layout()

    # -- layout --------------------------------------------------------------

    def _bin_labels(self, feature: str) -> list[str]:
        n_value_bins = len(self.cuts[feature]) + 1
        return [f"b{i}" for i in range(n_value_bins)] + ["absent"]

    def _build_layout(self) -> None:
        names: list[str] = []
        offsets: dict[str, int] = {}
        for feature in NUMERIC_FEATURES:
            offsets[feature] = len(names)
            names.extend(f"{feature}={lab}" for lab in self._bin_labels(feature))
        for feature, levels in CATEGORICAL_LEVELS.items():
            offsets[feature] = len(names)
            names.extend(f"{feature}={level}" for level in levels)
        for feature in BOOLEAN_FEATURES:
            offsets[feature] = len(names)
            names.append(feature)
        for a, b in self.interactions:
            key = f"{a}*{b}"
            offsets[key] = len(names)
            for la in self._bin_labels(a):
                names.extend(f"{key}={la}:{lb}" for lb in self._bin_labels(b))
        self.indicator_names = names
        self._offsets = offsets

    @property
    def width(self) -> int:
        return len(self.indicator_names)

    # -- fitting ---------------------------------------------------------------

    @classmethod
    def fit(
        cls,
        train_records: Sequence[QueryFeatureRecord],
        interactions: Sequence[Sequence[str]] = DEFAULT_INTERACTIONS,
    ) -> "FeatureScheme":
        """Learn decile cuts for every numeric feature from training rows only."""
        if not train_records:
            raise ConfigError("cannot fit a feature scheme on zero records")
        cuts = {}
        for feature in NUMERIC_FEATURES:
            values = [
                r.numeric[feature]
                for r in train_records
                if r.numeric.get(feature) is not None
            ]
            cuts[feature] = fit_bins(values)
        pairs = tuple((str(a), str(b)) for a, b in interactions)
        return cls(cuts=cuts, interactions=pairs)

    # -- encoding ----------------------------------------------------------------

    def encode(self, record: QueryFeatureRecord) -> np.ndarray:
        """Dense uint8 indicator vector; exactly one active indicator per
        feature group (booleans are single optional indicators)."""
        row = np.zeros(self.width, dtype=np.uint8)
        bins: dict[str, int] = {}
        for feature in NUMERIC_FEATURES:
            idx = bin_index(record.numeric.get(feature), self.cuts[feature])
            bins[feature] = idx
            row[self._offsets[feature] + idx] = 1
        for feature, levels in CATEGORICAL_LEVELS.items():
            value = record.categorical.get(feature, "Unknown")
            if value not in levels:
                value = "Unknown"
            row[self._offsets[feature] + levels.index(value)] = 1
        for feature in BOOLEAN_FEATURES:
            if record.booleans.get(feature, False):
                row[self._offsets[feature]] = 1
        for a, b in self.interactions:
            width_b = len(self.cuts[b]) + 2
            joint = bins[a] * width_b + bins[b]
            row[self._offsets[f"{a}*{b}"] + joint] = 1
        return row

    def encode_matrix(
        self, records: Sequence[QueryFeatureRecord]
    ) -> tuple[np.ndarray, np.ndarray]:
        """Encode records into (X, y); y is 1 for the positive (DSAT) class."""
        X = np.zeros((len(records), self.width), dtype=np.uint8)
        y = np.zeros(len(records), dtype=np.uint8)
        for i, record in enumerate(records):
            X[i] = self.encode(record)
            y[i] = 1 if record.label is POSITIVE_LABEL else 0
        return X, y

    # -- persistence ----------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "cuts": {k: list(v) for k, v in self.cuts.items()},
            "interactions": [list(p) for p in self.interactions],
            "indicator_names": list(self.indicator_names),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "FeatureScheme":
        if obj.get("version") != 1:
            raise ConfigError(f"unsupported feature scheme version: {obj.get('version')}")
        scheme = cls(
            cuts={k: [float(c) for c in v] for k, v in obj["cuts"].items()},
            interactions=tuple(tuple(p) for p in obj["interactions"]),
        )
        if scheme.indicator_names != obj["indicator_names"]:
            raise ConfigError("feature scheme indicator layout mismatch")
        return scheme

    def content_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()


def split_train_test(
    records: Sequence[QueryFeatureRecord],
    test_fraction: float,
    seed: int,
) -> tuple[list[QueryFeatureRecord], list[QueryFeatureRecord]]:
    """Label-stratified, seeded, disjoint split with queries as the unit."""
    if not (0.0 < test_fraction < 1.0):
        raise ConfigError("test_fraction must be in (0, 1)")
    by_label: dict[Label, list[QueryFeatureRecord]] = {Label.SAT: [], Label.DSAT: []}
    for record in sorted(records, key=lambda r: r.normalized_query):
        by_label[record.label].append(record)
    rng = np.random.default_rng(seed)
    train: list[QueryFeatureRecord] = []
    test: list[QueryFeatureRecord] = []
    for label in (Label.DSAT, Label.SAT):
        group = by_label[label]
        if len(group) < 2:
            raise StratificationError(
                f"class {label.value} has {len(group)} record(s); need at least 2"
            )
        n_test = int(len(group) * test_fraction + 0.5)
        n_test = min(max(n_test, 1), len(group) - 1)
        order = rng.permutation(len(group))
        test.extend(group[i] for i in order[:n_test])
        train.extend(group[i] for i in order[n_test:])
    train.sort(key=lambda r: r.normalized_query)
    test.sort(key=lambda r: r.normalized_query)
    return train, test


def records_from_mapping(
    rows: Sequence[Mapping[str, object]]
) -> list[QueryFeatureRecord]:
    """Rebuild records from dict rows (the query_features.csv schema)."""
    records = []
    for row in rows:
        records.append(
            QueryFeatureRecord(
                normalized_query=str(row["normalized_query"]),
                rating=int(row["rating"]),  # type: ignore[arg-type]
                label=Label(str(row["label"])),
                numeric={
                    k: (None if row[k] in ("", None) else float(row[k]))  # type: ignore[arg-type]
                    for k in NUMERIC_FEATURES
                },
                booleans={k: str(row[k]) in ("1", "True", "true") for k in BOOLEAN_FEATURES},
                categorical={k: str(row[k]) for k in CATEGORICAL_LEVELS},
            )
        )
    return records
