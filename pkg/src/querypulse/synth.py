"""Synthetic labeled query-log generator with known ground truth.

Every behavioral metric is tied to a latent 1..5 quality rating through a
monotone link, so the full pipeline can be validated end-to-end: better-rated
queries get more clicks, swipes, carts, filters, sorts and impressions,
higher click/cart success, and (deliberately, matching observed user
behavior) slower first clicks at deeper positions. Query frequency follows a
truncated Zipf law so volume segments separate realistically.

All randomness flows from numpy SeedSequence streams: one for corpus-level
draws, one for session assembly, one per query for behavior, and one per
instance for event placement. Output is byte-identical for a fixed config.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ConfigError, TrendError
from .events import (
    EventType,
    ExpertLabel,
    NetworkType,
    ingest_events,
    ingest_labels,
    query_counts,
    write_labels,
)
from .metafeat import VolumeSegment, assign_volume_segments, segment_mean_counts
from .metrics import extract_instance_metrics

WEEK_MS = 7 * 24 * 3600 * 1000


@dataclass(frozen=True)
class Link:
    """Affine map rating -> parameter: base + step * (rating - 1)."""

    base: float
    step: float

    def at(self, rating: int) -> float:
        return self.base + self.step * (rating - 1)


def _default_links() -> dict[str, Link]:
    return {
        # probabilities per instance
        "click_prob": Link(0.30, 0.12),
        "cart_prob": Link(0.05, 0.10),
        "auto_suggest_prob": Link(0.20, 0.08),
        # Poisson means for counts (extra clicks/carts beyond the first)
        "clicks_extra": Link(0.2, 0.5),
        "carts_extra": Link(0.1, 0.15),
        "swipes": Link(0.3, 0.55),
        "filters": Link(0.15, 0.20),
        "sorts": Link(0.10, 0.12),
        "impressions": Link(2.0, 0.8),
        # first click lands later and deeper as quality improves
        "first_click_ms": Link(1800.0, 700.0),
        "first_cart_ms": Link(3000.0, 900.0),
        "first_click_pos_extra": Link(0.8, 0.8),
        # dwell after the last interaction
        "extra_dwell_ms": Link(4000.0, 1500.0),
    }


#: Category -> (brand words, head nouns). Shared with the default lexicons.
CATEGORY_VOCAB: dict[str, tuple[tuple[str, ...], tuple[str, ...]]] = {
    "MobilePhones": (
        ("nova", "zentro", "orbit", "kite", "pixelio"),
        ("phone", "smartphone", "mobile"),
    ),
    "Books": (
        ("pageturner", "inkwell", "folio", "quill"),
        ("novel", "cookbook", "textbook", "comics", "biography"),
    ),
    "Electronics": (
        ("voltedge", "ampora", "circuita", "gadgetron"),
        ("laptop", "headphones", "camera", "television", "speaker"),
    ),
    "Lifestyle": (
        ("stride", "urbanloom", "fleetfoot", "dapperly"),
        ("shoes", "tshirt", "jeans", "watch", "backpack"),
    ),
    "HomeAndFurniture": (
        ("oakbarn", "nestcraft", "hearthline", "loomhouse"),
        ("sofa", "dining table", "mattress", "bookshelf", "lamp"),
    ),
}

MODEL_TOKENS = ("x", "pro", "max", "mini", "ultra", "neo", "prime", "air", "s2", "go")
ATTRIBUTES = (
    "red", "blue", "black", "white", "green", "slim", "large",
    "wireless", "leather", "wooden", "cotton", "compact",
)
SUFFIXES = (
    "", "", "", "64 gb", "128 gb", "under 1000", "below 500",
    "greater than 4 gb", "between 500 and 1000", "best", "least expensive",
    "2 liters", "latest",
)
TAIL_WORDS = (
    "", "", "for men", "for women", "for kids", "online", "sale", "offer",
    "new", "price", "with warranty",
)
NETWORK_CHOICES = (
    (NetworkType.WIFI, 0.45),
    (NetworkType.FOUR_G, 0.25),
    (NetworkType.THREE_G, 0.18),
    (NetworkType.TWO_G, 0.07),
    (NetworkType.OTHER, 0.05),
)
PRODUCTS_FOUND_BASE = {"Product": 60.0, "FacetCategory": 600.0, "Category": 4000.0}
TYPE_WEIGHTS = (("Product", 0.30), ("FacetCategory", 0.40), ("Category", 0.30))

#: Metrics whose per-rating means the generated corpus must keep monotone
#: increasing, and how each is measured: count metrics average over all
#: instances, rates are instance fractions, clicked metrics average over
#: instances with a click.
TREND_METRICS: tuple[tuple[str, str], ...] = (
    ("num_clicks", "count"),
    ("num_swipes", "count"),
    ("num_carts", "count"),
    ("num_filters", "count"),
    ("num_sorts", "count"),
    ("num_impressions", "count"),
    ("click_success", "rate"),
    ("cart_success", "rate"),
    ("time_to_first_click_ms", "clicked"),
    ("pos_first_click", "clicked"),
)


@dataclass
class GeneratorConfig:
    """Knobs of the synthetic corpus; defaults target a laptop-scale run."""

    seed: int
    n_queries: int = 5000
    zipf_exponent: float = 1.1
    instance_scale: float = 8000.0
    min_instances: int = 5
    # mass per rating 1..5; DSAT (1-3) carries ~37.3% as in the labeled pool
    rating_prior: tuple[float, ...] = (0.07, 0.12, 0.1833, 0.3767, 0.25)
    click_logit_sd: float = 0.35
    cart_logit_sd: float = 0.35
    serp_exit_prob: float = 0.9
    week_start_ms: int = 1_514_764_800_000
    links: dict[str, Link] = field(default_factory=_default_links)

    def validate(self) -> None:
        if self.n_queries < 1:
            raise ConfigError("n_queries must be >= 1")
        if self.zipf_exponent <= 0:
            raise ConfigError("zipf_exponent must be > 0")
        if self.instance_scale <= 0 or self.min_instances < 1:
            raise ConfigError("instance_scale and min_instances must be positive")
        if len(self.rating_prior) != 5:
            raise ConfigError("rating_prior needs 5 entries")
        if any(p <= 0 for p in self.rating_prior) or abs(sum(self.rating_prior) - 1.0) > 1e-9:
            raise ConfigError("rating_prior must be positive and sum to 1")
        if not (0.0 <= self.serp_exit_prob <= 1.0):
            raise ConfigError("serp_exit_prob must be in [0, 1]")
        missing = set(_default_links()) - set(self.links)
        if missing:
            raise ConfigError(f"missing link functions: {sorted(missing)}")
        for name in ("click_prob", "cart_prob", "auto_suggest_prob"):
            link = self.links[name]
            if not (0.0 < link.at(1) and link.at(5) < 1.0):
                raise ConfigError(f"link {name} leaves (0, 1) over ratings 1..5")
        for name, link in self.links.items():
            if link.step <= 0:
                raise ConfigError(f"link {name} must increase with rating")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["links"] = {k: [v.base, v.step] for k, v in self.links.items()}
        out["rating_prior"] = list(self.rating_prior)
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "GeneratorConfig":
        data = dict(obj)
        if "links" in data:
            data["links"] = {
                k: Link(float(v[0]), float(v[1])) for k, v in data["links"].items()
            }
        if "rating_prior" in data:
            data["rating_prior"] = tuple(float(p) for p in data["rating_prior"])
        try:
            config = cls(**data)
        except TypeError as exc:
            raise ConfigError(f"bad generator config: {exc}") from exc
        config.validate()
        return config


@dataclass(frozen=True)
class QuerySpec:
    """Ground truth for one generated query."""

    query: str
    rating: int
    category: str
    query_type: str
    n_instances: int


def _instance_counts(config: GeneratorConfig) -> list[int]:
    return [
        max(
            config.min_instances,
            round(config.instance_scale * (k + 1) ** -config.zipf_exponent),
        )
        for k in range(config.n_queries)
    ]


def _weighted_choice(rng: np.random.Generator, pairs) -> object:
    values = [p[0] for p in pairs]
    weights = np.asarray([p[1] for p in pairs], dtype=np.float64)
    return values[rng.choice(len(values), p=weights / weights.sum())]


def _make_query_text(rng: np.random.Generator, category: str, qtype: str) -> str:
    brands, nouns = CATEGORY_VOCAB[category]
    brand = brands[rng.integers(len(brands))]
    noun = nouns[rng.integers(len(nouns))]
    if qtype == "Product":
        words = [brand, noun, MODEL_TOKENS[rng.integers(len(MODEL_TOKENS))]]
    elif qtype == "FacetCategory":
        words = [ATTRIBUTES[rng.integers(len(ATTRIBUTES))]]
        if rng.random() < 0.5:
            words.append(brand)
        words.append(noun)
    else:
        words = [noun]
    suffix = SUFFIXES[rng.integers(len(SUFFIXES))]
    if suffix:
        words.append(suffix)
    tail = TAIL_WORDS[rng.integers(len(TAIL_WORDS))]
    if tail:
        words.append(tail)
    return " ".join(" ".join(words).split())


def _draw_query_specs(config: GeneratorConfig, rng: np.random.Generator) -> list[QuerySpec]:
    counts = _instance_counts(config)
    categories = sorted(CATEGORY_VOCAB)
    seen: set[str] = set()
    specs: list[QuerySpec] = []
    for qi in range(config.n_queries):
        category = categories[rng.integers(len(categories))]
        qtype = str(_weighted_choice(rng, TYPE_WEIGHTS))
        text = _make_query_text(rng, category, qtype)
        attempts = 0
        while text in seen:
            attempts += 1
            if attempts > 40:  # tiny vocab exhausted; force uniqueness
                text = f"{text} v{len(seen)}"
                break
            text = _make_query_text(rng, category, qtype)
        seen.add(text)
        rating = int(rng.choice(5, p=np.asarray(config.rating_prior))) + 1
        specs.append(
            QuerySpec(
                query=text,
                rating=rating,
                category=category,
                query_type=qtype,
                n_instances=counts[qi],
            )
        )
    return specs


def _sigmoid(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


def _logit(p: float) -> float:
    return math.log(p / (1.0 - p))


@dataclass
class _InstancePlan:
    """Metric-relevant draws for one instance; event jitter comes later."""

    query_idx: int
    ordinal: int
    n_clicks: int
    first_click_ms: int
    first_click_pos: int
    n_carts: int
    first_cart_ms: int
    n_swipes: int
    n_filters: int
    n_sorts: int
    n_impressions: int
    extra_dwell_ms: int
    auto_suggest: bool
    network: NetworkType
    products_found: int
    has_exit: bool
    title_case: bool


def _plan_query_instances(
    spec: QuerySpec, qi: int, config: GeneratorConfig, stream: np.random.SeedSequence
) -> list[_InstancePlan]:
    rng = np.random.default_rng(stream)
    links = config.links
    r = spec.rating
    n = spec.n_instances
    click_p = _sigmoid(_logit(links["click_prob"].at(r)) + rng.normal(0.0, config.click_logit_sd))
    cart_p = _sigmoid(_logit(links["cart_prob"].at(r)) + rng.normal(0.0, config.cart_logit_sd))

    clicked = rng.random(n) < click_p
    carted = rng.random(n) < cart_p
    n_clicks = np.where(clicked, 1 + rng.poisson(links["clicks_extra"].at(r), n), 0)
    n_carts = np.where(carted, 1 + rng.poisson(links["carts_extra"].at(r), n), 0)
    click_ms = rng.gamma(4.0, links["first_click_ms"].at(r) / 4.0, n)
    cart_ms = rng.gamma(4.0, links["first_cart_ms"].at(r) / 4.0, n)
    click_pos = 1 + rng.poisson(links["first_click_pos_extra"].at(r), n)
    swipes = rng.poisson(links["swipes"].at(r), n)
    filters = rng.poisson(links["filters"].at(r), n)
    sorts = rng.poisson(links["sorts"].at(r), n)
    impressions = rng.poisson(links["impressions"].at(r), n)
    dwell = rng.gamma(3.0, links["extra_dwell_ms"].at(r) / 3.0, n)
    suggest = rng.random(n) < links["auto_suggest_prob"].at(r)
    networks = [_weighted_choice(rng, NETWORK_CHOICES) for _ in range(n)]
    base_found = PRODUCTS_FOUND_BASE[spec.query_type] * (0.7 + 0.15 * (r - 1))
    found = np.maximum(1, np.round(rng.lognormal(math.log(base_found), 0.6, n))).astype(int)
    exits = rng.random(n) < config.serp_exit_prob
    titled = rng.random(n) < 0.15

    return [
        _InstancePlan(
            query_idx=qi,
            ordinal=j,
            n_clicks=int(n_clicks[j]),
            first_click_ms=max(1, int(click_ms[j])),
            first_click_pos=int(click_pos[j]),
            n_carts=int(n_carts[j]),
            first_cart_ms=max(1, int(cart_ms[j])),
            n_swipes=int(swipes[j]),
            n_filters=int(filters[j]),
            n_sorts=int(sorts[j]),
            n_impressions=int(impressions[j]),
            extra_dwell_ms=max(0, int(dwell[j])),
            auto_suggest=bool(suggest[j]),
            network=networks[j],  # type: ignore[arg-type]
            products_found=int(found[j]),
            has_exit=bool(exits[j]),
            title_case=bool(titled[j]),
        )
        for j in range(n)
    ]


def _instance_events(
    plan: _InstancePlan,
    spec: QuerySpec,
    start_ms: int,
    session_id: str,
    user_id: str,
    seed: int,
) -> tuple[list[dict], int]:
    """Materialize the wire-format events of one instance.

    Returns (event dicts sorted by time, instance duration in ms).
    """
    rng = np.random.default_rng(
        np.random.SeedSequence([seed, 7, plan.query_idx, plan.ordinal])
    )
    instance_id = f"q{plan.query_idx:05d}-i{plan.ordinal:05d}"
    raw_query = spec.query.title() if plan.title_case else spec.query
    window = 8000.0 + 4000.0 * (spec.rating - 1)

    planned: list[tuple[int, EventType, int | None, str | None]] = []
    for i in range(plan.n_impressions):
        planned.append(
            (100 + 120 * i, EventType.PRODUCT_IMPRESSION, i + 1,
             f"prod-{plan.query_idx:05d}-{i + 1:03d}")
        )
    if plan.n_clicks > 0:
        offset = plan.first_click_ms
        pos = plan.first_click_pos
        for c in range(plan.n_clicks):
            planned.append(
                (offset, EventType.CLICK, pos, f"prod-{plan.query_idx:05d}-{pos:03d}")
            )
            offset += max(1, int(rng.gamma(2.0, 1500.0)))
            pos = 1 + int(rng.poisson(plan.first_click_pos - 1 + 0.5))
    if plan.n_carts > 0:
        offset = plan.first_cart_ms
        for c in range(plan.n_carts):
            planned.append(
                (offset, EventType.CART_ADD, None,
                 f"prod-{plan.query_idx:05d}-{1 + int(rng.integers(1, 12)):03d}")
            )
            offset += max(1, int(rng.gamma(2.0, 2500.0)))
    for etype, count in (
        (EventType.SWIPE, plan.n_swipes),
        (EventType.FILTER_APPLY, plan.n_filters),
        (EventType.SORT_APPLY, plan.n_sorts),
    ):
        for _ in range(count):
            planned.append((200 + int(rng.random() * window), etype, None, None))

    last_offset = max((p[0] for p in planned), default=0)
    duration = last_offset + plan.extra_dwell_ms if plan.has_exit else last_offset

    events: list[dict] = []

    def emit(offset: int, etype: EventType, position: int | None,
             product_id: str | None, **extra) -> None:
        record = {
            "event_id": f"{instance_id}-e{len(events):03d}",
            "query_instance_id": instance_id,
            "session_id": session_id,
            "user_id": user_id,
            "raw_query": raw_query,
            "event_type": etype.value,
            "timestamp_ms": start_ms + offset,
        }
        if position is not None:
            record["position"] = position
        if product_id is not None:
            record["product_id"] = product_id
        record.update(extra)
        events.append(record)

    emit(0, EventType.SERP_SHOWN, None, None,
         network_type=plan.network.value,
         auto_suggest=plan.auto_suggest,
         num_products_found=plan.products_found)
    for offset, etype, position, product_id in planned:
        emit(offset, etype, position, product_id)
    if plan.has_exit:
        emit(duration, EventType.SERP_EXIT, None, None)

    events.sort(key=lambda e: (e["timestamp_ms"], e["event_id"]))
    return events, duration


def generate(config: GeneratorConfig, out_dir: str | Path) -> dict:
    """Write events.jsonl, labels.csv and manifest.json under out_dir.

    Returns a small summary dict (paths and corpus counts).
    """
    config.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    root = np.random.SeedSequence(config.seed)
    corpus_stream, session_stream, behavior_parent = root.spawn(3)
    specs = _draw_query_specs(config, np.random.default_rng(corpus_stream))

    plans: list[_InstancePlan] = []
    for qi, (spec, stream) in enumerate(zip(specs, behavior_parent.spawn(len(specs)))):
        plans.extend(_plan_query_instances(spec, qi, config, stream))

    # group instances into sessions and schedule them over the week
    session_rng = np.random.default_rng(session_stream)
    order = session_rng.permutation(len(plans))
    scheduled: list[tuple[int, str, str, _InstancePlan]] = []
    pos = 0
    session_idx = 0
    while pos < len(order):
        size = min(int(session_rng.geometric(0.55)), 4, len(order) - pos)
        session_id = f"s{session_idx:06d}"
        user_id = f"u{session_idx:06d}"
        start = config.week_start_ms + int(session_rng.integers(0, WEEK_MS))
        for member in range(size):
            plan = plans[order[pos]]
            scheduled.append((start, session_id, user_id, plan))
            # rough advance; the real duration is applied while writing
            start += 30_000 + int(session_rng.integers(0, 60_000))
            pos += 1
        session_idx += 1

    scheduled.sort(key=lambda s: (s[0], f"q{s[3].query_idx:05d}-i{s[3].ordinal:05d}"))

    n_events = 0
    events_path = out / "events.jsonl"
    with open(events_path, "w", encoding="utf-8") as fh:
        for start_ms, session_id, user_id, plan in scheduled:
            events, _ = _instance_events(
                plan, specs[plan.query_idx], start_ms, session_id, user_id,
                config.seed,
            )
            for event in events:
                fh.write(json.dumps(event, sort_keys=True))
                fh.write("\n")
            n_events += len(events)

    labels_path = out / "labels.csv"
    write_labels(
        sorted(
            (ExpertLabel(s.query, s.rating) for s in specs),
            key=lambda l: l.normalized_query,
        ),
        str(labels_path),
    )

    manifest_path = out / "manifest.json"
    manifest = {
        "version": 1,
        "config": config.to_dict(),
        "n_queries": len(specs),
        "n_instances": len(plans),
        "n_events": n_events,
        "queries": {
            s.query: {
                "rating": s.rating,
                "category": s.category,
                "query_type": s.query_type,
                "n_instances": s.n_instances,
            }
            for s in sorted(specs, key=lambda s: s.query)
        },
    }
    manifest_path.write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return {
        "events": str(events_path),
        "labels": str(labels_path),
        "manifest": str(manifest_path),
        "n_queries": len(specs),
        "n_instances": len(plans),
        "n_events": n_events,
    }


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    mean = float(values.mean())
    se = float(values.std(ddof=0) / math.sqrt(len(values))) if len(values) > 1 else 0.0
    return mean, se


def manifest_check(
    corpus_dir: str | Path,
    min_se_multiple: float = 3.0,
    ratio_bounds: tuple[float, float] = (17.0, 51.0),
) -> dict:
    """Recompute per-rating behavior means from a generated corpus and verify
    every configured monotone trend plus the Head/TorsoBottom volume ratio.

    Raises TrendError naming the first violated metric.
    """
    corpus_dir = Path(corpus_dir)
    instances, stats = ingest_events(str(corpus_dir / "events.jsonl"))
    labels, _ = ingest_labels(str(corpus_dir / "labels.csv"))
    if stats.dropped_instances or stats.malformed_lines:
        raise TrendError("generated corpus does not ingest cleanly")

    by_rating: dict[int, list] = {r: [] for r in range(1, 6)}
    for instance in instances:
        label = labels.get(instance.normalized_query)
        if label is None:
            continue
        by_rating[label.rating].append(extract_instance_metrics(instance))

    report: dict = {
        "instances_per_rating": {r: len(ms) for r, ms in by_rating.items()},
        "trends": {},
    }
    for metric, kind in TREND_METRICS:
        means: list[float] = []
        ses: list[float] = []
        for r in range(1, 6):
            metrics_r = by_rating[r]
            if kind == "clicked":
                values = np.asarray(
                    [getattr(m, metric) for m in metrics_r if m.click_success],
                    dtype=np.float64,
                )
            elif kind == "rate":
                values = np.asarray(
                    [float(getattr(m, metric)) for m in metrics_r], dtype=np.float64
                )
            else:
                values = np.asarray(
                    [getattr(m, metric) for m in metrics_r], dtype=np.float64
                )
            if values.size == 0:
                raise TrendError(f"no observations for {metric} at rating {r}")
            mean, se = _mean_se(values)
            means.append(mean)
            ses.append(se)
        gaps_ok = []
        for r in range(4):
            gap = means[r + 1] - means[r]
            se_diff = math.hypot(ses[r], ses[r + 1])
            gaps_ok.append(gap > min_se_multiple * se_diff)
        report["trends"][metric] = {
            "means": means,
            "ses": ses,
            "monotone": all(gaps_ok),
        }
        if not all(gaps_ok):
            raise TrendError(
                f"metric {metric} is not monotone increasing in rating "
                f"(means {['%.4f' % m for m in means]})"
            )

    counts = query_counts(instances)
    segments = assign_volume_segments(counts)
    seg_means = segment_mean_counts(counts, segments)
    head = seg_means[VolumeSegment.HEAD]
    bottom = seg_means[VolumeSegment.TORSO_BOTTOM]
    ratio = head / bottom if bottom else float("inf")
    report["head_torso_bottom_ratio"] = ratio
    report["segment_mean_counts"] = {s.value: seg_means[s] for s in VolumeSegment}
    lo, hi = ratio_bounds
    if not (lo <= ratio <= hi):
        raise TrendError(
            f"Head/TorsoBottom mean-count ratio {ratio:.1f} outside [{lo}, {hi}]"
        )
    return report


def label_balance(labels: Iterable[ExpertLabel]) -> dict[str, float]:
    """Fraction of DSAT (ratings 1-3) and SAT (4-5) among the labels."""
    ratings = [l.rating for l in labels]
    if not ratings:
        return {"dsat": 0.0, "sat": 0.0}
    dsat = sum(1 for r in ratings if r <= 3) / len(ratings)
    return {"dsat": dsat, "sat": 1.0 - dsat}
