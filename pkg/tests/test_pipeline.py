"""Stage-level integration: featurize -> train -> evaluate -> score."""

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from querypulse.config import PipelineConfig
from querypulse.evaluation import auc
from querypulse.features import FeatureScheme, records_from_mapping
from querypulse.forest import predict_proba
from querypulse.metrics import METRIC_FIELDS, STAT_NAMES
from querypulse.pipeline import (
    load_model,
    read_matrix,
    run_evaluate,
    run_featurize,
    run_score,
    run_train,
    sessions_from_instances,
)
from querypulse.synth import GeneratorConfig, generate


def pipeline_config(base: Path, **overrides) -> PipelineConfig:
    settings = {
        "seed": 23,
        "paths": {
            "events": str(base / "data" / "events.jsonl"),
            "labels": str(base / "data" / "labels.csv"),
            "workdir": str(base / "run"),
        },
        "ingest": {"min_count": 3},
        "featurize": {"test_fraction": 0.2},
        "train": {"grid": [{"n_trees": 40, "max_depth": 10, "min_samples_leaf": 3}]},
        "eval": {"target_precision": 0.85, "render_figures": False},
    }
    settings.update(overrides)
    return PipelineConfig.from_dict(settings)


@pytest.fixture(scope="module")
def pipeline_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("pipeline")
    generate(
        GeneratorConfig(seed=23, n_queries=500, instance_scale=700.0, min_instances=4),
        base / "data",
    )
    config = pipeline_config(base)
    featurize_info = run_featurize(config)
    train_info = run_train(config)
    report = run_evaluate(config)
    return base, config, featurize_info, train_info, report


class TestFeaturize:
    def test_outputs_exist(self, pipeline_run):
        base, _, info, _, _ = pipeline_run
        workdir = base / "run"
        for name in (
            "ingest_stats.json", "aggregates.csv", "query_features.csv",
            "train_matrix.csv", "test_matrix.csv", "scheme.json", "lm.json",
        ):
            assert (workdir / name).exists(), name
        assert info["n_records"] == 500

    def test_split_sizes(self, pipeline_run):
        _, config, info, _, _ = pipeline_run
        assert info["n_train"] + info["n_test"] == info["n_records"]
        assert info["n_test"] == pytest.approx(
            info["n_records"] * config.test_fraction, abs=2
        )

    def test_aggregates_csv_columns(self, pipeline_run):
        base, _, _, _, _ = pipeline_run
        with open(base / "run" / "aggregates.csv", newline="") as fh:
            header = next(csv.reader(fh))
        for name, _, _ in METRIC_FIELDS:
            for stat in STAT_NAMES:
                assert f"{name}_{stat}" in header

    def test_absent_stats_are_empty_cells(self, pipeline_run):
        base, _, _, _, _ = pipeline_run
        with open(base / "run" / "aggregates.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        # some query somewhere never had a cart; its cart-time stats are blank
        assert any(row["time_to_first_cart_mean"] == "" for row in rows)

    def test_query_features_round_trip(self, pipeline_run):
        base, _, _, _, _ = pipeline_run
        with open(base / "run" / "query_features.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        records = records_from_mapping(rows)
        scheme = FeatureScheme.from_dict(
            json.loads((base / "run" / "scheme.json").read_text())
        )
        queries, X, _, _ = read_matrix(base / "run" / "train_matrix.csv")
        by_query = {r.normalized_query: r for r in records}
        for i, query in enumerate(queries[:20]):
            assert np.array_equal(scheme.encode(by_query[query]), X[i])

    def test_scheme_fitted_on_train_only(self, pipeline_run):
        base, config, _, _, _ = pipeline_run
        with open(base / "run" / "query_features.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        train_rows = [r for r in rows if r["split"] == "train"]
        refit = FeatureScheme.fit(
            records_from_mapping(train_rows),
            interactions=config.interactions,
        )
        scheme = FeatureScheme.from_dict(
            json.loads((base / "run" / "scheme.json").read_text())
        )
        assert refit.content_hash() == scheme.content_hash()


class TestTrain:
    def test_model_artifact_contents(self, pipeline_run):
        base, config, _, _, _ = pipeline_run
        artifact = json.loads((base / "run" / "model.json").read_text())
        assert artifact["version"] == 1
        assert artifact["forest"]["metadata"]["config_hash"] == config.content_hash()
        assert artifact["forest"]["metadata"]["data_hash"]
        assert artifact["scheme"]["indicator_names"]

    def test_rerun_is_byte_identical(self, pipeline_run):
        base, config, _, _, _ = pipeline_run
        model_path = base / "run" / "model.json"
        before = model_path.read_bytes()
        run_train(config)
        assert model_path.read_bytes() == before

    def test_loaded_model_predicts_test_matrix(self, pipeline_run):
        base, _, _, _, report = pipeline_run
        model, _ = load_model(base / "run")
        _, X, y, _ = read_matrix(base / "run" / "test_matrix.csv")
        assert auc(predict_proba(model, X), y) == pytest.approx(report.overall_auc)


class TestEvaluate:
    def test_report_files(self, pipeline_run):
        base, _, _, _, _ = pipeline_run
        for name in ("report.json", "report.txt", "roc.csv", "pr.csv", "ctr_buckets.csv"):
            assert (base / "run" / name).exists(), name
        assert not (base / "run" / "figures").exists()  # render_figures off

    def test_recovery_auc_is_strong(self, pipeline_run):
        _, _, _, _, report = pipeline_run
        assert report.overall_auc >= 0.8

    def test_roc_csv_matches_auc(self, pipeline_run):
        base, _, _, _, report = pipeline_run
        with open(base / "run" / "roc.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        fpr = np.array([float(r["fpr"]) for r in rows])
        tpr = np.array([float(r["tpr"]) for r in rows])
        trapezoid = getattr(np, "trapezoid", np.trapz)
        assert float(trapezoid(tpr, fpr)) == pytest.approx(report.overall_auc, abs=1e-9)

    def test_ctr_rows_sum_to_one(self, pipeline_run):
        _, _, _, _, report = pipeline_run
        for row, count in zip(report.ctr_buckets.fractions, report.ctr_buckets.counts):
            if count:
                assert sum(row) == pytest.approx(1.0, abs=1e-9)

    def test_slices_cover_all_keys(self, pipeline_run):
        _, _, _, _, report = pipeline_run
        assert set(report.slice_aucs) == {"query_cat", "query_type", "volume_segment"}

    def test_rerun_report_is_byte_identical(self, pipeline_run):
        base, config, _, _, _ = pipeline_run
        report_path = base / "run" / "report.json"
        before = report_path.read_bytes()
        run_evaluate(config)
        assert report_path.read_bytes() == before


class TestScore:
    def test_scores_and_interventions(self, pipeline_run):
        base, config, info, _, report = pipeline_run
        results = run_score(config)
        assert len(results) == info["n_records"]
        threshold = report.operating_point["threshold"]
        for row in results:
            assert 0.0 <= row["dsat_probability"] <= 1.0
            assert row["intervene"] == (row["dsat_probability"] >= threshold)
        with open(base / "run" / "scores.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == len(results)


class TestSessions:
    def test_session_query_order(self):
        from querypulse.events import ingest_events
        from conftest import jsonl, make_event

        lines = jsonl([
            make_event(event_id="a", query_instance_id="i1", session_id="s1",
                       raw_query="red shoes", timestamp_ms=1000),
            make_event(event_id="b", query_instance_id="i2", session_id="s1",
                       raw_query="red nike shoes", timestamp_ms=5000),
            make_event(event_id="c", query_instance_id="i3", session_id="s2",
                       raw_query="sofa", timestamp_ms=2000),
        ])
        instances, _ = ingest_events(lines)
        sessions = sessions_from_instances(instances)
        assert sessions == [["red shoes", "red nike shoes"], ["sofa"]]
