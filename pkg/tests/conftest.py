"""Shared fixtures and the acceptance-criteria terminal summary."""

from __future__ import annotations

import json

import pytest

from querypulse.events import EventType, NetworkType


def make_event(
    event_id="e001",
    query_instance_id="qi1",
    session_id="s1",
    user_id="u1",
    raw_query="red shoes",
    event_type="SerpShown",
    timestamp_ms=1000,
    **optional,
) -> dict:
    """Wire-format event dict with sensible defaults per event type."""
    record = {
        "event_id": event_id,
        "query_instance_id": query_instance_id,
        "session_id": session_id,
        "user_id": user_id,
        "raw_query": raw_query,
        "event_type": event_type,
        "timestamp_ms": timestamp_ms,
    }
    if event_type == EventType.SERP_SHOWN.value:
        record.setdefault("network_type", NetworkType.WIFI.value)
        record.setdefault("auto_suggest", False)
        record.setdefault("num_products_found", 25)
    if event_type in (EventType.CLICK.value, EventType.PRODUCT_IMPRESSION.value):
        record.setdefault("position", 1)
    record.update(optional)
    return record


def jsonl(records) -> list[str]:
    return [json.dumps(r) for r in records]


@pytest.fixture
def event_factory():
    return make_event


# -- acceptance summary -------------------------------------------------------

ACCEPTANCE_PREFIX = "tests/test_acceptance.py"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = []
    for outcome, flag in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL")):
        for report in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance" in nodeid and getattr(report, "when", "call") == "call":
                name = nodeid.split("::")[-1]
                rows.append((name, flag))
    if not rows:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, flag in sorted(rows):
        terminalreporter.write_line(f"{flag}  {name}")
