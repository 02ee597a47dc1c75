from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from agentsoc import fixture
from agentsoc.config import load_config
from agentsoc.nce import GeneratorConfig


@pytest.fixture(scope="session")
def poc_store():
    return fixture.build_store(42)


@pytest.fixture()
def fresh_store():
    return fixture.build_store(42)


@pytest.fixture(scope="session")
def gen_config():
    cfg = load_config(None, env={})
    return GeneratorConfig.from_nce_config(cfg.nce, fixture.nce_tables())


@pytest.fixture(scope="session")
def app_config():
    return load_config(None, env={})


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("poc-fixture")
    fixture.generate_fixture(42, out)
    return out


@pytest.fixture(scope="session")
def poc_incident(poc_store, app_config):
    """The enriched POC incident, built once from the scenario pieces."""
    from agentsoc.ingest import DetectionConfig, build_baseline, parse_auth_events
    from agentsoc.perception import IncidentCounter, enrich, normalize, reduce_noise
    from agentsoc.ingest import detect_anomalies

    events = parse_auth_events(fixture.generate_poc_events(42))
    split = len(events) // 2
    baseline = build_baseline(events[:split])
    alerts = detect_anomalies(events[split:], baseline, DetectionConfig())
    normalized = [normalize(a, "ingest") for a in alerts]
    clusters, _ = reduce_noise(normalized)
    counter = IncidentCounter("POC")
    cfg = app_config.perception
    incident = enrich(clusters[0], poc_store, baseline, counter, cfg)
    return incident, baseline
