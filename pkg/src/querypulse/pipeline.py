"""Stage orchestration: featurize, train, evaluate, score.

Each stage reads the previous stage's files from the configured workdir and
writes its own, never mutating inputs. Artifacts embed the config hash so a
run can be traced back to its exact configuration.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .errors import ConfigError
from .evaluation import (
    EvalReport,
    auc,
    ctr_bucket_analysis,
    operating_point,
    pr_curve,
    roc_curve,
    slice_auc,
)
from .events import (
    IngestStats,
    QueryInstance,
    filter_by_volume,
    ingest_events,
    ingest_labels,
    query_counts,
)
from .features import (
    BOOLEAN_FEATURES,
    CATEGORICAL_LEVELS,
    NUMERIC_FEATURES,
    FeatureScheme,
    Label,
    QueryFeatureRecord,
    map_label,
    split_train_test,
)
from .forest import (
    ForestModel,
    cv_tune,
    predict_proba,
    rfe,
    top_importances,
    train_forest,
)
from .metafeat import (
    assign_volume_segments,
    classify_category,
    classify_query_type,
    load_category_lexicon,
    load_type_lexicons,
)
from .metrics import METRIC_FIELDS, RATE_FIELDS, STAT_NAMES, aggregate_all, write_aggregates_csv
from .textfeat import (
    NgramLanguageModel,
    detect_lexicon_flags,
    load_lexicons,
    per_query_query_sim,
    perplexity,
    train_lm,
)

logger = logging.getLogger(__name__)


def default_lexicons_dir() -> Path:
    return Path(resources.files("querypulse").joinpath("data/lexicons"))  # type: ignore[arg-type]


def sessions_from_instances(instances: list[QueryInstance]) -> list[list[str]]:
    """Per-session query sequences, ordered by SERP time within a session."""
    by_session: dict[str, list[QueryInstance]] = {}
    for instance in instances:
        by_session.setdefault(instance.serp_event.session_id, []).append(instance)
    sessions = []
    for session_id in sorted(by_session):
        members = sorted(
            by_session[session_id],
            key=lambda i: (i.serp_event.timestamp_ms, i.query_instance_id),
        )
        sessions.append([m.normalized_query for m in members])
    return sessions


@dataclass
class FeatureBundle:
    """Everything the featurize stage derives from one event log."""

    records: list[QueryFeatureRecord]
    aggregates: dict
    lm: NgramLanguageModel
    ingest_stats: IngestStats
    counts: dict[str, int]


def build_features(
    config: PipelineConfig,
    events_path: str | None = None,
    labels: dict | None = None,
    lm: NgramLanguageModel | None = None,
) -> FeatureBundle:
    """Ingest an event log and assemble one feature record per query.

    With labels, only labeled queries produce records (the training path);
    without, every retained query gets an unlabeled record (the scoring
    path, which must reuse a previously trained language model).
    """
    instances, stats = ingest_events(events_path or config.events_path)
    logger.info("ingested %d instances (%d dropped)", stats.instances, stats.dropped_instances)
    retained = filter_by_volume(instances, config.min_count)

    counts = query_counts(instances)
    segments = assign_volume_segments(counts, config.head_pct, config.torso_pct)
    if lm is None:
        lm = train_lm(
            [i.normalized_query for i in instances],
            order=config.lm_order,
            smoothing_k=config.lm_smoothing_k,
        )
    sims = per_query_query_sim(sessions_from_instances(instances))

    lexicons_dir = config.lexicons_dir or default_lexicons_dir()
    lexicons = load_lexicons(lexicons_dir)
    category_lexicon = load_category_lexicon(Path(lexicons_dir) / "categories.tsv")
    type_lexicons = load_type_lexicons(lexicons_dir)

    aggregates = aggregate_all(retained)
    records: list[QueryFeatureRecord] = []
    for query in sorted(aggregates):
        rating = None
        label = None
        if labels is not None:
            entry = labels.get(query)
            if entry is None:
                continue
            rating = entry.rating
            label = map_label(rating)
        agg = aggregates[query]
        numeric: dict[str, float | None] = {}
        for name, _, _ in METRIC_FIELDS:
            stats_entry = agg.stats[name]
            for stat in STAT_NAMES:
                numeric[f"{name}_{stat}"] = getattr(stats_entry, stat)
        for rate in RATE_FIELDS:
            numeric[rate] = getattr(agg, rate)
        numeric["query_count"] = float(counts[query])
        numeric["char_query_len"] = float(len(query))
        numeric["word_query_len"] = float(len(query.split()))
        numeric["lm_score"] = perplexity(lm, query)
        numeric["query_sim"] = sims.get(query)
        flags = detect_lexicon_flags(query, lexicons)
        categorical = {
            "query_cat": classify_category(query, category_lexicon).value,
            "query_type": classify_query_type(
                query,
                type_lexicons.products,
                type_lexicons.attributes,
                type_lexicons.categories,
            ).value,
            "volume_segment": segments[query].value,
        }
        records.append(
            QueryFeatureRecord(
                normalized_query=query,
                rating=rating,
                label=label,
                numeric=numeric,
                booleans=flags,
                categorical=categorical,
            )
        )
    return FeatureBundle(
        records=records,
        aggregates=aggregates,
        lm=lm,
        ingest_stats=stats,
        counts=counts,
    )


# -- featurize stage ---------------------------------------------------------

RAW_COLUMNS = (
    ["normalized_query", "rating", "label", "split"]
    + list(CATEGORICAL_LEVELS)
    + list(BOOLEAN_FEATURES)
    + list(NUMERIC_FEATURES)
)


def _fmt_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_raw_features(
    path: Path, records: list[QueryFeatureRecord], split_of: dict[str, str]
) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RAW_COLUMNS)
        for record in records:
            row = [
                record.normalized_query,
                record.rating,
                record.label.value if record.label else "",
                split_of.get(record.normalized_query, ""),
            ]
            row += [record.categorical[c] for c in CATEGORICAL_LEVELS]
            row += [_fmt_cell(record.booleans[b]) for b in BOOLEAN_FEATURES]
            row += [_fmt_cell(record.numeric[n]) for n in NUMERIC_FEATURES]
            writer.writerow(row)


def _write_matrix(
    path: Path,
    scheme: FeatureScheme,
    records: list[QueryFeatureRecord],
    X: np.ndarray,
    y: np.ndarray,
) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["normalized_query", "label"] + scheme.indicator_names)
        for record, row, label in zip(records, X, y):
            writer.writerow(
                [record.normalized_query, int(label)] + row.tolist()
            )


def read_matrix(path: str | Path) -> tuple[list[str], np.ndarray, np.ndarray, list[str]]:
    """Read an encoded matrix CSV: (queries, X, y, indicator names)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        names = header[2:]
        queries = []
        rows = []
        labels = []
        for row in reader:
            queries.append(row[0])
            labels.append(int(row[1]))
            rows.append([int(v) for v in row[2:]])
    X = np.asarray(rows, dtype=np.uint8)
    y = np.asarray(labels, dtype=np.uint8)
    return queries, X, y, names


def run_featurize(config: PipelineConfig) -> dict:
    """Ingest, aggregate, featurize, split and encode; write all artifacts."""
    workdir = Path(config.workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    labels, label_stats = ingest_labels(config.labels_path)
    bundle = build_features(config, labels=labels)
    if not bundle.records:
        raise ConfigError(
            "no labeled queries survive ingestion and volume filtering; "
            "check ingest.min_count against the corpus"
        )

    train_records, test_records = split_train_test(
        bundle.records, config.test_fraction, config.seed
    )
    scheme = FeatureScheme.fit(train_records, interactions=config.interactions)
    X_train, y_train = scheme.encode_matrix(train_records)
    X_test, y_test = scheme.encode_matrix(test_records)

    split_of = {r.normalized_query: "train" for r in train_records}
    split_of.update({r.normalized_query: "test" for r in test_records})

    (workdir / "ingest_stats.json").write_text(
        json.dumps(
            {
                "events": bundle.ingest_stats.__dict__,
                "labels": label_stats.__dict__,
                "config_hash": config.content_hash(),
            },
            sort_keys=True,
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    write_aggregates_csv(bundle.aggregates.values(), str(workdir / "aggregates.csv"))
    _write_raw_features(workdir / "query_features.csv", bundle.records, split_of)
    _write_matrix(workdir / "train_matrix.csv", scheme, train_records, X_train, y_train)
    _write_matrix(workdir / "test_matrix.csv", scheme, test_records, X_test, y_test)
    scheme_doc = scheme.to_dict()
    scheme_doc["config_hash"] = config.content_hash()
    (workdir / "scheme.json").write_text(
        json.dumps(scheme_doc, sort_keys=True) + "\n", encoding="utf-8"
    )
    bundle.lm.save(workdir / "lm.json")
    logger.info(
        "featurized %d queries (%d train / %d test, %d indicators)",
        len(bundle.records), len(train_records), len(test_records), scheme.width,
    )
    return {
        "n_records": len(bundle.records),
        "n_train": len(train_records),
        "n_test": len(test_records),
        "width": scheme.width,
    }


# -- train stage ---------------------------------------------------------------

def run_train(config: PipelineConfig) -> dict:
    """Tune (when the grid has options), optionally run RFE, train, persist."""
    workdir = Path(config.workdir)
    scheme = FeatureScheme.from_dict(
        json.loads((workdir / "scheme.json").read_text(encoding="utf-8"))
    )
    _, X, y, names = read_matrix(workdir / "train_matrix.csv")
    if names != scheme.indicator_names:
        raise ConfigError("train matrix does not match the feature scheme")

    grid = config.hyper_grid()
    cv_results: list[tuple[dict, float]] = []
    if len(grid) == 1:
        params = grid[0]
    else:
        params, results = cv_tune(X, y, grid, k=config.cv_folds, seed=config.seed)
        cv_results = [(p.to_dict(), score) for p, score in results]

    selected = None
    rfe_history: list[tuple[int, float]] = []
    if config.rfe_enabled:
        selected, rfe_history = rfe(
            X, y, params,
            drop_fraction=config.rfe_drop_fraction,
            min_features=min(config.rfe_min_features, X.shape[1]),
            k=config.cv_folds,
            seed=config.seed,
        )

    model = train_forest(
        X, y, params, seed=config.seed, feature_names=names, selected=selected
    )
    model.metadata = {
        "config_hash": config.content_hash(),
        "data_hash": hashlib.sha256(X.tobytes() + y.tobytes()).hexdigest(),
        "n_train": int(X.shape[0]),
        "n_positive": int(y.sum()),
        "cv_results": cv_results,
        "rfe_history": rfe_history,
    }
    artifact = {"version": 1, "scheme": scheme.to_dict(), "forest": model.to_dict()}
    (workdir / "model.json").write_text(
        json.dumps(artifact, sort_keys=True) + "\n", encoding="utf-8"
    )
    logger.info(
        "trained forest: %d trees, %d/%d features",
        model.params.n_trees, len(model.selected), model.width,
    )
    return {
        "params": params.to_dict(),
        "n_selected": int(len(model.selected)),
        "cv_results": cv_results,
    }


def load_model(workdir: str | Path) -> tuple[ForestModel, FeatureScheme]:
    artifact = json.loads(
        (Path(workdir) / "model.json").read_text(encoding="utf-8")
    )
    if artifact.get("version") != 1:
        raise ConfigError(f"unsupported model artifact version: {artifact.get('version')}")
    return (
        ForestModel.from_dict(artifact["forest"]),
        FeatureScheme.from_dict(artifact["scheme"]),
    )


# -- evaluate stage --------------------------------------------------------------

def _read_raw_features(path: Path) -> list[dict]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def run_evaluate(config: PipelineConfig) -> EvalReport:
    """Score the held-out split, build the report and write all outputs."""
    workdir = Path(config.workdir)
    model, _ = load_model(workdir)
    queries, X_test, y_test, names = read_matrix(workdir / "test_matrix.csv")
    if names != model.feature_names:
        raise ConfigError("test matrix does not match the trained model")
    scores = predict_proba(model, X_test)

    raw_rows = _read_raw_features(workdir / "query_features.csv")
    by_query = {row["normalized_query"]: row for row in raw_rows}
    slice_aucs = {}
    for key in CATEGORICAL_LEVELS:
        values = [by_query[q][key] for q in queries]
        slice_aucs[key] = slice_auc(scores, y_test, values)

    op = None
    try:
        op = operating_point(scores, y_test, config.target_precision)
    except Exception as exc:  # unattainable targets are reported, not fatal
        logger.warning("operating point unattainable: %s", exc)

    ctr = ctr_bucket_analysis(
        {row["normalized_query"]: float(row["click_success_rate"]) for row in raw_rows},
        {row["normalized_query"]: int(row["rating"]) for row in raw_rows},
    )
    report = EvalReport(
        overall_auc=auc(scores, y_test),
        n_test=int(len(y_test)),
        roc_points=roc_curve(scores, y_test),
        pr_points=pr_curve(scores, y_test),
        operating_point=op,
        target_precision=config.target_precision,
        slice_aucs=slice_aucs,
        importances_top10=top_importances(model, 10),
        ctr_buckets=ctr,
        metadata={
            "config_hash": config.content_hash(),
            "model_data_hash": model.metadata.get("data_hash"),
        },
    )
    report.save_json(workdir / "report.json")
    report.save_roc_csv(workdir / "roc.csv")
    report.save_pr_csv(workdir / "pr.csv")
    report.save_ctr_csv(workdir / "ctr_buckets.csv")
    (workdir / "report.txt").write_text(report.render_text(), encoding="utf-8")
    if config.render_figures:
        from . import plots  # matplotlib loads lazily

        plots.render_report_figures(report, workdir / "figures")
    logger.info("held-out AUC %.4f over %d queries", report.overall_auc, report.n_test)
    return report


# -- score stage ---------------------------------------------------------------

def run_score(config: PipelineConfig, events_path: str | None = None) -> list[dict]:
    """Score queries from an event log with a trained model.

    The intervention flag fires when the DSAT probability reaches the
    operating-point threshold calibrated by the evaluate stage.
    """
    workdir = Path(config.workdir)
    model, scheme = load_model(workdir)
    lm = NgramLanguageModel.load(workdir / "lm.json")
    report = json.loads((workdir / "report.json").read_text(encoding="utf-8"))
    op = report.get("operating_point")
    if op is None:
        raise ConfigError(
            "report.json has no operating point; rerun evaluate with an "
            "attainable precision target"
        )
    threshold = float(op["threshold"])

    bundle = build_features(config, events_path=events_path, labels=None, lm=lm)
    X = np.stack([scheme.encode(record) for record in bundle.records])
    scores = predict_proba(model, X)
    results = []
    with open(workdir / "scores.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["normalized_query", "dsat_probability", "intervene"])
        for record, score in zip(bundle.records, scores):
            score = float(score)
            intervene = score >= threshold
            writer.writerow([record.normalized_query, repr(score), int(intervene)])
            results.append(
                {
                    "normalized_query": record.normalized_query,
                    "dsat_probability": score,
                    "intervene": intervene,
                }
            )
    logger.info(
        "scored %d queries; %d flagged for intervention",
        len(results), sum(r["intervene"] for r in results),
    )
    return results
