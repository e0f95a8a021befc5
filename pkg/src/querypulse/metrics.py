"""Per-instance behavioral metrics and per-query aggregates.

An instance contributes activity-time, positional and count metrics; a query
aggregates them across its instances with mean / median / population std /
inter-quartile range, skipping instances where an optional metric is absent.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np

from .errors import EmptyAggregateError, InvalidValueError
from .events import EventType, NetworkType, QueryInstance

#: Network types counted as a good connection.
GOOD_NETWORKS = frozenset({NetworkType.WIFI, NetworkType.FOUR_G})


@dataclass(frozen=True)
class QueryInstanceMetrics:
    """Behavioral measurements of one query issuance."""

    time_to_first_click_ms: int | None
    time_to_first_cart_ms: int | None
    query_duration_ms: int
    pos_first_click: int | None
    num_clicks: int
    num_swipes: int
    num_carts: int
    num_filters: int
    num_sorts: int
    num_impressions: int
    click_success: bool
    cart_success: bool
    is_auto_suggest: bool
    is_good_network: bool
    num_products_found: int


@dataclass(frozen=True)
class AggregateStats:
    """Descriptive statistics of one metric across a query's instances.

    All four statistics are absent (None) when no instance contributed.
    """

    mean: float | None
    median: float | None
    std: float | None
    iqr: float | None
    n: int

    @classmethod
    def empty(cls) -> "AggregateStats":
        return cls(mean=None, median=None, std=None, iqr=None, n=0)


#: Metrics aggregated per query as (export name, instance attribute, optional),
#: in export column order. Optional metrics may be absent on an instance and
#: then skip the aggregate.
METRIC_FIELDS: tuple[tuple[str, str, bool], ...] = (
    ("time_to_first_click", "time_to_first_click_ms", True),
    ("time_to_first_cart", "time_to_first_cart_ms", True),
    ("query_duration", "query_duration_ms", False),
    ("pos_first_click", "pos_first_click", True),
    ("num_clicks", "num_clicks", False),
    ("num_swipes", "num_swipes", False),
    ("num_carts", "num_carts", False),
    ("num_filters", "num_filters", False),
    ("num_sorts", "num_sorts", False),
    ("num_impressions", "num_impressions", False),
    ("num_products_found", "num_products_found", False),
)

RATE_FIELDS = (
    "click_success_rate",
    "cart_success_rate",
    "auto_suggest_rate",
    "good_network_rate",
)

STAT_NAMES = ("mean", "median", "std", "iqr")


@dataclass(frozen=True)
class QueryAggregate:
    """Aggregated behavior of one query over all its instances in the window."""

    normalized_query: str
    query_count: int
    stats: dict[str, AggregateStats]
    click_success_rate: float
    cart_success_rate: float
    auto_suggest_rate: float
    good_network_rate: float


def extract_instance_metrics(instance: QueryInstance) -> QueryInstanceMetrics:
    """Compute all per-instance metrics from the validated event sequence."""
    serp = instance.serp_event
    t0 = serp.timestamp_ms
    first_click = None
    first_cart = None
    counts = {etype: 0 for etype in EventType}
    for event in instance.events:
        counts[event.event_type] += 1
        if event.event_type is EventType.CLICK and first_click is None:
            first_click = event
        elif event.event_type is EventType.CART_ADD and first_cart is None:
            first_cart = event
    num_clicks = counts[EventType.CLICK]
    num_carts = counts[EventType.CART_ADD]
    return QueryInstanceMetrics(
        time_to_first_click_ms=(first_click.timestamp_ms - t0) if first_click else None,
        time_to_first_cart_ms=(first_cart.timestamp_ms - t0) if first_cart else None,
        query_duration_ms=instance.events[-1].timestamp_ms - t0,
        pos_first_click=first_click.position if first_click else None,
        num_clicks=num_clicks,
        num_swipes=counts[EventType.SWIPE],
        num_carts=num_carts,
        num_filters=counts[EventType.FILTER_APPLY],
        num_sorts=counts[EventType.SORT_APPLY],
        num_impressions=counts[EventType.PRODUCT_IMPRESSION],
        click_success=num_clicks > 0,
        cart_success=num_carts > 0,
        is_auto_suggest=bool(serp.auto_suggest),
        is_good_network=serp.network_type in GOOD_NETWORKS,
        num_products_found=int(serp.num_products_found or 0),
    )


def aggregate_stats(values: Sequence[float]) -> AggregateStats:
    """Mean, midpoint median, population std and type-7 IQR of a sample.

    Empty input yields the absent-stats sentinel with n=0.
    """
    if len(values) == 0:
        return AggregateStats.empty()
    arr = np.asarray(values, dtype=np.float64)
    if np.isnan(arr).any():
        raise InvalidValueError("NaN in aggregate input")
    arr = np.sort(arr)  # canonical order: bit-exact permutation invariance
    q1, q3 = np.percentile(arr, [25.0, 75.0])
    return AggregateStats(
        mean=float(arr.mean()),
        median=float(np.median(arr)),
        std=float(arr.std(ddof=0)),
        iqr=float(q3 - q1),
        n=int(arr.size),
    )


def aggregate_query(
    normalized_query: str, instance_metrics: Sequence[QueryInstanceMetrics]
) -> QueryAggregate:
    """Aggregate one query's instance metrics.

    Optional metrics only include the instances where they are present;
    success rates are the fraction of instances with the flag set.
    """
    if not instance_metrics:
        raise EmptyAggregateError(f"no instances for query {normalized_query!r}")
    n = len(instance_metrics)
    stats: dict[str, AggregateStats] = {}
    for name, attr, optional in METRIC_FIELDS:
        values = [getattr(m, attr) for m in instance_metrics]
        if optional:
            values = [v for v in values if v is not None]
        stats[name] = aggregate_stats(values)
    return QueryAggregate(
        normalized_query=normalized_query,
        query_count=n,
        stats=stats,
        click_success_rate=sum(m.click_success for m in instance_metrics) / n,
        cart_success_rate=sum(m.cart_success for m in instance_metrics) / n,
        auto_suggest_rate=sum(m.is_auto_suggest for m in instance_metrics) / n,
        good_network_rate=sum(m.is_good_network for m in instance_metrics) / n,
    )


def aggregate_all(instances: Iterable[QueryInstance]) -> dict[str, QueryAggregate]:
    """Group instances by query and aggregate each group."""
    grouped: dict[str, list[QueryInstanceMetrics]] = {}
    for instance in instances:
        grouped.setdefault(instance.normalized_query, []).append(
            extract_instance_metrics(instance)
        )
    return {
        query: aggregate_query(query, metrics)
        for query, metrics in sorted(grouped.items())
    }


def write_aggregates_csv(
    aggregates: Iterable[QueryAggregate], sink: str | TextIO
) -> None:
    """Dump aggregates, one row per query, columns ``<metric>_<stat>``.

    Absent statistics become empty cells.
    """
    own = isinstance(sink, str)
    fh: TextIO = open(sink, "w", encoding="utf-8", newline="") if own else sink  # type: ignore[assignment]
    try:
        header = ["normalized_query", "query_count"]
        for name, _, _ in METRIC_FIELDS:
            header.extend(f"{name}_{stat}" for stat in STAT_NAMES)
        header.extend(RATE_FIELDS)
        writer = csv.writer(fh)
        writer.writerow(header)
        for agg in aggregates:
            row: list[object] = [agg.normalized_query, agg.query_count]
            for name, _, _ in METRIC_FIELDS:
                stats = agg.stats[name]
                for stat in STAT_NAMES:
                    value = getattr(stats, stat)
                    row.append("" if value is None else _fmt(value))
            row.extend(_fmt(getattr(agg, rate)) for rate in RATE_FIELDS)
            writer.writerow(row)
    finally:
        if own:
            fh.close()


def _fmt(value: float) -> str:
    if math.isfinite(value) and value == int(value):
        return str(int(value))
    return repr(float(value))
