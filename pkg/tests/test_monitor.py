from __future__ import annotations

import json

import pytest

from agentsoc.config import MonitorConfig
from agentsoc.errors import ValidationError
from agentsoc.ingest import AuthEvent, DetectionConfig, build_baseline
from agentsoc.fixture import build_store
from agentsoc.monitor import OutcomeVerdict, assess_outcome, emit_feedback
from agentsoc.playbook import (
    ExecutionMode,
    Playbook,
    PlaybookStatus,
    PlaybookStep,
    execute_playbook,
)


def ev(t, user="user123@CORP", src="ws-fin-27", dst="srv-fin-01", outcome="Success"):
    return AuthEvent(
        time=t,
        source_user=user,
        dest_user=user,
        source_host=src,
        dest_host=dst,
        auth_type="Kerberos",
        logon_type="Network",
        orientation="LogOn",
        outcome=outcome,
    )


def _live_isolation(store):
    pb = Playbook(
        playbook_id="PB-M",
        incident_id="INC-M",
        steps=[PlaybookStep(primitive="ISOLATE_HOST", target="ws-fin-27", impact=0.15)],
        projected_impact=0.15,
        created_at=100,
        status=PlaybookStatus.DRAFT,
    )
    pb.transition(PlaybookStatus.APPROVED)
    return execute_playbook(pb, ExecutionMode.LIVE, store)


def test_isolation_with_quiet_post_window_is_achieved(fresh_store):
    report = _live_isolation(fresh_store)
    assessment = assess_outcome(report, [], fresh_store)
    assert assessment.verdict is OutcomeVerdict.ACHIEVED
    assert assessment.rollback_recommended is False
    assert assessment.affected_entities == ("ws-fin-27",)


def test_isolation_violated_by_post_event_fails(fresh_store):
    report = _live_isolation(fresh_store)
    violating = [ev(5000, src="ws-fin-27", dst="srv-fin-01")]
    assessment = assess_outcome(report, violating, fresh_store)
    assert assessment.verdict is OutcomeVerdict.FAILED
    assert assessment.rollback_recommended is True
    failing = [c for c in assessment.checks if not c.passed]
    assert failing and "ws-fin-27" in failing[0].observed


def test_two_step_partial_achievement(fresh_store):
    pb = Playbook(
        playbook_id="PB-M2",
        incident_id="INC-M",
        steps=[
            PlaybookStep(primitive="ISOLATE_HOST", target="ws-fin-27", impact=0.15),
            PlaybookStep(primitive="DISABLE_USER", target="user123", impact=0.3),
        ],
        projected_impact=0.3,
        created_at=100,
        status=PlaybookStatus.DRAFT,
    )
    pb.transition(PlaybookStatus.APPROVED)
    report = execute_playbook(pb, ExecutionMode.LIVE, fresh_store)
    # Isolation holds (no traffic), but the user shows fresh successful activity.
    post = [ev(5000, src="ws-hr-01", dst="srv-hr-01")]
    assessment = assess_outcome(report, post, fresh_store, MonitorConfig())
    assert assessment.verdict is OutcomeVerdict.PARTIALLY_ACHIEVED
    assert assessment.rollback_recommended is False  # default for partial


def test_dry_run_report_rejected():
    store = build_store(42)
    pb = Playbook(
        playbook_id="PB-M3",
        incident_id="INC-M",
        steps=[PlaybookStep(primitive="MONITOR_ONLY", target="ws-fin-27")],
        projected_impact=0.0,
        created_at=100,
    )
    report = execute_playbook(pb, ExecutionMode.DRY_RUN, store)
    with pytest.raises(ValidationError):
        assess_outcome(report, [], store)


def test_correlated_alerts_attached(fresh_store):
    report = _live_isolation(fresh_store)
    baseline = build_baseline([ev(10)])
    post = [ev(5000, src="ws-fin-27", dst="srv-never-seen")]
    assessment = assess_outcome(
        report,
        post,
        fresh_store,
        baseline=baseline,
        detection_config=DetectionConfig(),
        correlation_entities=("user123@CORP",),
    )
    assert assessment.correlated_alert_ids != ()


def test_enable_mfa_effect_check(fresh_store):
    pb = Playbook(
        playbook_id="PB-M4",
        incident_id="INC-M",
        steps=[PlaybookStep(primitive="ENABLE_MFA", target="user123", impact=0.03)],
        projected_impact=0.03,
        created_at=100,
        status=PlaybookStatus.DRAFT,
    )
    pb.transition(PlaybookStatus.APPROVED)
    report = execute_playbook(pb, ExecutionMode.LIVE, fresh_store)
    assessment = assess_outcome(report, [], fresh_store)
    assert assessment.verdict is OutcomeVerdict.ACHIEVED
    assert assessment.checks[0].predicate == "attr(user123.mfa_enforced)"


# ---------------------------------------------------------------------------
# Feedback deltas
# ---------------------------------------------------------------------------

def test_achieved_feedback_tags_containment_verified(fresh_store):
    report = _live_isolation(fresh_store)
    assessment = assess_outcome(report, [], fresh_store)
    v0 = fresh_store.version
    delta = emit_feedback(assessment, fresh_store)
    assert fresh_store.version == v0 + 1
    assert fresh_store.graph.nodes["ws-fin-27"].attr("containment_verified") == "true"
    assert all(op.op == "set_attr" for op in delta.ops)


def test_failed_feedback_leaves_deviation_marker(fresh_store):
    report = _live_isolation(fresh_store)
    assessment = assess_outcome(report, [ev(5000, src="ws-fin-27")], fresh_store)
    assert assessment.verdict is OutcomeVerdict.FAILED
    emit_feedback(assessment, fresh_store)
    assert fresh_store.graph.nodes["ws-fin-27"].attr("deviation_flagged") == "true"


def test_feedback_never_touches_topology(fresh_store):
    report = _live_isolation(fresh_store)
    assessment = assess_outcome(report, [], fresh_store)
    edges_before = json.dumps([e.to_json() for e in fresh_store.graph.all_edges()], sort_keys=True)
    emit_feedback(assessment, fresh_store)
    edges_after = json.dumps([e.to_json() for e in fresh_store.graph.all_edges()], sort_keys=True)
    assert edges_before == edges_after


def test_monitor_only_playbook_feedback_is_noop(fresh_store):
    pb = Playbook(
        playbook_id="PB-M5",
        incident_id="INC-M",
        steps=[PlaybookStep(primitive="MONITOR_ONLY", target="ws-fin-27")],
        projected_impact=0.0,
        created_at=100,
        status=PlaybookStatus.DRAFT,
    )
    pb.transition(PlaybookStatus.APPROVED)
    report = execute_playbook(pb, ExecutionMode.LIVE, fresh_store)
    assessment = assess_outcome(report, [], fresh_store)
    assert assessment.checks == ()
    v0 = fresh_store.version
    delta = emit_feedback(assessment, fresh_store)
    assert delta.is_empty()
    assert fresh_store.version == v0


def test_assessment_determinism(fresh_store):
    report = _live_isolation(fresh_store)
    post = [ev(5000, src="ws-fin-27")]
    a = assess_outcome(report, post, fresh_store).to_json()
    b = assess_outcome(report, post, fresh_store).to_json()
    assert a == b


def test_closed_loop_deviation_raises_next_cycle_confidence(poc_incident):
    """After a failed containment feeds back, rerunning reasoning on the
    same incident weighs the deviation evidence upward."""
    from agentsoc.config import load_config
    from agentsoc.fixture import nce_tables
    from agentsoc.nce import GeneratorConfig, generate_hypotheses
    from agentsoc.perception import IncidentCounter, enrich, normalize, reduce_noise
    from agentsoc.ingest import RawAlert

    incident, baseline = poc_incident
    store = build_store(42)
    gen = GeneratorConfig.from_nce_config(load_config(None, env={}).nce, nce_tables())
    first_top = generate_hypotheses(incident, store, gen)[0].confidence

    report = _live_isolation(store)
    # user123 keeps authenticating: containment failed.
    assessment = assess_outcome(report, [ev(5000, src="ws-fin-27")], store)
    assert assessment.verdict is OutcomeVerdict.FAILED
    emit_feedback(assessment, store)
    # Tag the principal too, as a second cycle's enrichment would see it.
    from agentsoc.knowledge import DeltaOp, KnowledgeDelta, Provenance

    node = store.graph.nodes["user123"]
    store.apply_delta(
        KnowledgeDelta(
            "D-dev",
            (DeltaOp(op="set_attr", node_id="user123", attr_key="deviation_flagged",
                     attr_new="true", attr_old=node.attr("deviation_flagged")),),
            Provenance.MONITOR_OBSERVATION,
        )
    )

    alerts = [RawAlert.from_json(a.payload) for a in incident.alerts]
    normalized = [normalize(a, "ingest") for a in alerts]
    clusters, _ = reduce_noise(normalized)
    second = enrich(clusters[0], store, baseline, IncidentCounter("POC"))
    assert "deviation-flagged" in second.flags
    second_top = generate_hypotheses(second, store, gen)[0].confidence
    assert second_top >= first_top
