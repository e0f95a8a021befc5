"""Interaction-event data model, log ingestion and label ingestion.

The external log format is line-delimited JSON, one event object per line,
with snake_case field names and optional fields omitted when absent. Labels
arrive as a two-column CSV (``query,rating``).
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, TextIO

from .errors import CorruptLogError, InvalidQueryError

logger = logging.getLogger(__name__)


class EventType(str, Enum):
    SERP_SHOWN = "SerpShown"
    PRODUCT_IMPRESSION = "ProductImpression"
    CLICK = "Click"
    SWIPE = "Swipe"
    CART_ADD = "CartAdd"
    FILTER_APPLY = "FilterApply"
    SORT_APPLY = "SortApply"
    SERP_EXIT = "SerpExit"


class NetworkType(str, Enum):
    WIFI = "Wifi"
    FOUR_G = "FourG"
    THREE_G = "ThreeG"
    TWO_G = "TwoG"
    OTHER = "Other"


#: Event types that must carry a ``position`` field.
POSITIONAL_EVENTS = frozenset({EventType.PRODUCT_IMPRESSION, EventType.CLICK})


@dataclass(frozen=True)
class InteractionEvent:
    """One timestamped user/system action within a query instance."""

    event_id: str
    query_instance_id: str
    session_id: str
    user_id: str
    raw_query: str
    event_type: EventType
    timestamp_ms: int
    position: int | None = None
    product_id: str | None = None
    network_type: NetworkType | None = None
    auto_suggest: bool | None = None
    num_products_found: int | None = None

    def validate(self) -> None:
        """Raise ValueError if any field invariant is broken."""
        if not self.event_id or not self.query_instance_id:
            raise ValueError("event_id and query_instance_id must be non-empty")
        if not self.raw_query:
            raise ValueError("raw_query must be non-empty")
        if not isinstance(self.timestamp_ms, int) or self.timestamp_ms <= 0:
            raise ValueError("timestamp_ms must be a positive integer")
        needs_position = self.event_type in POSITIONAL_EVENTS
        if needs_position:
            if self.position is None or self.position < 1:
                raise ValueError(f"{self.event_type.value} requires position >= 1")
        elif self.position is not None:
            raise ValueError(f"{self.event_type.value} must not carry position")
        is_serp = self.event_type is EventType.SERP_SHOWN
        serp_fields = (self.network_type, self.auto_suggest, self.num_products_found)
        if is_serp:
            if any(v is None for v in serp_fields):
                raise ValueError(
                    "SerpShown requires network_type, auto_suggest and "
                    "num_products_found"
                )
            if self.num_products_found < 0:
                raise ValueError("num_products_found must be >= 0")
        elif any(v is not None for v in serp_fields):
            raise ValueError("only SerpShown carries SERP metadata fields")

    def to_dict(self) -> dict:
        """Wire representation; optional fields omitted when absent."""
        out: dict = {
            "event_id": self.event_id,
            "query_instance_id": self.query_instance_id,
            "session_id": self.session_id,
            "user_id": self.user_id,
            "raw_query": self.raw_query,
            "event_type": self.event_type.value,
            "timestamp_ms": self.timestamp_ms,
        }
        if self.position is not None:
            out["position"] = self.position
        if self.product_id is not None:
            out["product_id"] = self.product_id
        if self.network_type is not None:
            out["network_type"] = self.network_type.value
        if self.auto_suggest is not None:
            out["auto_suggest"] = self.auto_suggest
        if self.num_products_found is not None:
            out["num_products_found"] = self.num_products_found
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "InteractionEvent":
        if not isinstance(obj, dict):
            raise ValueError("event record must be a JSON object")
        known = {
            "event_id", "query_instance_id", "session_id", "user_id",
            "raw_query", "event_type", "timestamp_ms", "position",
            "product_id", "network_type", "auto_suggest", "num_products_found",
        }
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown event fields: {sorted(unknown)}")
        try:
            event_type = EventType(obj["event_type"])
        except (KeyError, ValueError) as exc:
            raise ValueError(f"bad event_type: {obj.get('event_type')!r}") from exc
        network = obj.get("network_type")
        if network is not None:
            network = NetworkType(network)
        for key in ("event_id", "query_instance_id", "session_id", "user_id",
                    "raw_query"):
            if not isinstance(obj.get(key), str):
                raise ValueError(f"{key} must be a string")
        for key in ("timestamp_ms", "position", "num_products_found"):
            if key in obj and not isinstance(obj[key], int):
                raise ValueError(f"{key} must be an integer")
        if "auto_suggest" in obj and not isinstance(obj["auto_suggest"], bool):
            raise ValueError("auto_suggest must be a boolean")
        event = cls(
            event_id=obj["event_id"],
            query_instance_id=obj["query_instance_id"],
            session_id=obj["session_id"],
            user_id=obj["user_id"],
            raw_query=obj["raw_query"],
            event_type=event_type,
            timestamp_ms=obj["timestamp_ms"],
            position=obj.get("position"),
            product_id=obj.get("product_id"),
            network_type=network,
            auto_suggest=obj.get("auto_suggest"),
            num_products_found=obj.get("num_products_found"),
        )
        event.validate()
        return event


@dataclass(frozen=True)
class ExpertLabel:
    """Editorial five-point rating for one normalized query."""

    normalized_query: str
    rating: int


@dataclass(frozen=True)
class QueryInstance:
    """All events of a single issuance of a query, anchored by one SERP view."""

    query_instance_id: str
    normalized_query: str
    events: tuple[InteractionEvent, ...]

    @property
    def serp_event(self) -> InteractionEvent:
        return self.events[0]


@dataclass
class IngestStats:
    """Counters describing what ingestion kept and what it threw away."""

    total_lines: int = 0
    blank_lines: int = 0
    malformed_lines: int = 0
    duplicate_events: int = 0
    dropped_instances: int = 0
    instances: int = 0
    events: int = 0
    label_rows: int = 0
    rejected_labels: int = 0
    duplicate_labels: int = 0

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True, indent=2)


def normalize_query(raw_query: str) -> str:
    """Lowercase, collapse internal whitespace, strip ends.

    Idempotent; raises InvalidQueryError when nothing is left.
    """
    normalized = " ".join(raw_query.lower().split())
    if not normalized:
        raise InvalidQueryError(f"query is empty after normalization: {raw_query!r}")
    return normalized


def _iter_lines(stream: str | TextIO | Iterable[str]) -> Iterator[str]:
    if isinstance(stream, str):
        with open(stream, "r", encoding="utf-8") as fh:
            yield from fh
    else:
        yield from stream


def ingest_events(
    stream: str | TextIO | Iterable[str],
) -> tuple[list[QueryInstance], IngestStats]:
    """Parse a JSONL event stream into validated, deterministically ordered
    query instances.

    Grouping is by query_instance_id; events are sorted by timestamp with
    event_id as tie-break, duplicate event_ids within an instance keep the
    first occurrence. Instances whose first event is not the single SerpShown
    are dropped and counted. Raises CorruptLogError when more than half the
    non-blank lines are malformed.
    """
    stats = IngestStats()
    groups: dict[str, list[InteractionEvent]] = {}
    for line in _iter_lines(stream):
        line = line.strip()
        if not line:
            stats.blank_lines += 1
            continue
        stats.total_lines += 1
        try:
            event = InteractionEvent.from_dict(json.loads(line))
        except (json.JSONDecodeError, ValueError, TypeError) as exc:
            stats.malformed_lines += 1
            logger.debug("malformed event line: %s", exc)
            continue
        groups.setdefault(event.query_instance_id, []).append(event)

    if stats.total_lines and stats.malformed_lines * 2 > stats.total_lines:
        raise CorruptLogError(
            f"{stats.malformed_lines} of {stats.total_lines} lines are "
            f"malformed; this does not look like an event log"
        )

    instances: list[QueryInstance] = []
    for instance_id, events in groups.items():
        seen: set[str] = set()
        deduped = []
        for event in events:  # stream order: first occurrence wins
            if event.event_id in seen:
                stats.duplicate_events += 1
                continue
            seen.add(event.event_id)
            deduped.append(event)
        deduped.sort(key=lambda e: (e.timestamp_ms, e.event_id))
        n_serp = sum(1 for e in deduped if e.event_type is EventType.SERP_SHOWN)
        if n_serp != 1 or deduped[0].event_type is not EventType.SERP_SHOWN:
            stats.dropped_instances += 1
            continue
        try:
            normalized = normalize_query(deduped[0].raw_query)
        except InvalidQueryError:
            stats.dropped_instances += 1
            continue
        instances.append(
            QueryInstance(
                query_instance_id=instance_id,
                normalized_query=normalized,
                events=tuple(deduped),
            )
        )

    instances.sort(key=lambda i: (i.events[0].timestamp_ms, i.query_instance_id))
    stats.instances = len(instances)
    stats.events = sum(len(i.events) for i in instances)
    return instances, stats


def serialize_instances(
    instances: Iterable[QueryInstance], sink: str | TextIO
) -> None:
    """Write instances back to the JSONL wire format (canonical order)."""
    own = isinstance(sink, str)
    fh: TextIO = open(sink, "w", encoding="utf-8") if own else sink  # type: ignore[assignment]
    try:
        for instance in instances:
            for event in instance.events:
                fh.write(json.dumps(event.to_dict(), sort_keys=True))
                fh.write("\n")
    finally:
        if own:
            fh.close()


def ingest_labels(
    stream: str | TextIO | Iterable[str],
) -> tuple[dict[str, ExpertLabel], IngestStats]:
    """Read the ``query,rating`` CSV into a map keyed by normalized query.

    Out-of-range ratings are rejected and counted; duplicate queries are
    last-writer-wins with a warning count.
    """
    stats = IngestStats()
    if isinstance(stream, str):
        fh: TextIO = open(stream, "r", encoding="utf-8", newline="")
        own = True
    elif isinstance(stream, io.TextIOBase) or hasattr(stream, "read"):
        fh = stream  # type: ignore[assignment]
        own = False
    else:
        fh = io.StringIO("\n".join(stream))
        own = False
    labels: dict[str, ExpertLabel] = {}
    try:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:2]] != ["query", "rating"]:
            raise CorruptLogError(f"labels file must start with 'query,rating' header, got {header}")
        for row in reader:
            if not row or all(not cell.strip() for cell in row):
                continue
            stats.label_rows += 1
            if len(row) < 2:
                stats.rejected_labels += 1
                continue
            try:
                normalized = normalize_query(row[0])
                rating = int(row[1])
            except (InvalidQueryError, ValueError):
                stats.rejected_labels += 1
                continue
            if rating not in (1, 2, 3, 4, 5):
                stats.rejected_labels += 1
                continue
            if normalized in labels:
                stats.duplicate_labels += 1
                logger.warning("duplicate label for %r; keeping the later one", normalized)
            labels[normalized] = ExpertLabel(normalized_query=normalized, rating=rating)
    finally:
        if own:
            fh.close()
    return labels, stats


def write_labels(labels: Iterable[ExpertLabel], sink: str | TextIO) -> None:
    """Write labels in the external CSV format."""
    own = isinstance(sink, str)
    fh: TextIO = open(sink, "w", encoding="utf-8", newline="") if own else sink  # type: ignore[assignment]
    try:
        writer = csv.writer(fh)
        writer.writerow(["query", "rating"])
        for label in labels:
            writer.writerow([label.normalized_query, label.rating])
    finally:
        if own:
            fh.close()


def filter_by_volume(
    instances: list[QueryInstance], min_count: int = 100
) -> list[QueryInstance]:
    """Keep instances of queries issued strictly more than min_count times."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts: dict[str, int] = {}
    for instance in instances:
        counts[instance.normalized_query] = counts.get(instance.normalized_query, 0) + 1
    return [i for i in instances if counts[i.normalized_query] > min_count]


def query_counts(instances: Iterable[QueryInstance]) -> dict[str, int]:
    """Instance count per normalized query."""
    counts: dict[str, int] = {}
    for instance in instances:
        counts[instance.normalized_query] = counts.get(instance.normalized_query, 0) + 1
    return counts
