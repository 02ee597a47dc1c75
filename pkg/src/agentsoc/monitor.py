"""Closed-loop verification: did containment do what it was supposed to?

Each mutating step of a live execution yields intended-effect checks over
the current graph and post-execution events. Outcomes feed back into the
knowledge store as attribute-only deltas (monitoring observes; it never
rewires topology), so later cycles see containment-verified or deviation
markers as evidence.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

from .config import MonitorConfig
from .errors import ValidationError
from .ingest import AuthEvent, Baseline, DetectionConfig, detect_anomalies
from .knowledge import (
    DeltaOp,
    EdgeKind,
    KnowledgeDelta,
    KnowledgeStore,
    Provenance,
)
from .playbook import ExecutionMode, ExecutionReport, StepStatus

logger = logging.getLogger(__name__)


class OutcomeVerdict(str, Enum):
    ACHIEVED = "Achieved"
    PARTIALLY_ACHIEVED = "PartiallyAchieved"
    FAILED = "Failed"


@dataclass(frozen=True)
class EffectCheck:
    predicate: str
    expected: str
    observed: str
    passed: bool

    def to_json(self) -> dict:
        return {
            "predicate": self.predicate,
            "expected": self.expected,
            "observed": self.observed,
            "passed": self.passed,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "EffectCheck":
        return cls(
            predicate=doc["predicate"],
            expected=doc["expected"],
            observed=doc["observed"],
            passed=bool(doc["passed"]),
        )


@dataclass(frozen=True)
class OutcomeAssessment:
    playbook_id: str
    checks: tuple[EffectCheck, ...]
    correlated_alert_ids: tuple[str, ...]
    verdict: OutcomeVerdict
    rollback_recommended: bool
    affected_entities: tuple[str, ...]

    def to_json(self) -> dict:
        return {
            "type": "assessment",
            "playbook_id": self.playbook_id,
            "checks": [c.to_json() for c in self.checks],
            "correlated_alert_ids": list(self.correlated_alert_ids),
            "verdict": self.verdict.value,
            "rollback_recommended": self.rollback_recommended,
            "affected_entities": list(self.affected_entities),
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "OutcomeAssessment":
        return cls(
            playbook_id=doc["playbook_id"],
            checks=tuple(EffectCheck.from_json(c) for c in doc["checks"]),
            correlated_alert_ids=tuple(doc["correlated_alert_ids"]),
            verdict=OutcomeVerdict(doc["verdict"]),
            rollback_recommended=bool(doc["rollback_recommended"]),
            affected_entities=tuple(doc["affected_entities"]),
        )


def _check_isolation(target: str, post_events: Sequence[AuthEvent], store: KnowledgeStore, cutoff: int) -> EffectCheck:
    graph = store.graph
    residual_edges = graph.edges_touching(target, kinds=[EdgeKind.REACHABLE]) if graph.has_node(target) else []
    offending = [
        e
        for e in post_events
        if e.time >= cutoff
        and e.outcome == "Success"
        and (e.source_host == target or e.dest_host == target)
    ]
    passed = not residual_edges and not offending
    observed = []
    if residual_edges:
        observed.append(f"{len(residual_edges)} reachability edges remain")
    if offending:
        observed.append(f"{len(offending)} successful auth events touch {target}")
    return EffectCheck(
        predicate=f"isolated({target})",
        expected=f"no reachability edges and no successful auth events touching {target}",
        observed="; ".join(observed) or "no residual reachability or traffic",
        passed=passed,
    )


def _same_identity(event_user: str, node_id: str) -> bool:
    """Event identities carry user@domain; graph nodes use the bare id."""
    return event_user == node_id or event_user.split("@", 1)[0] == node_id


def _check_user_disabled(target: str, post_events: Sequence[AuthEvent], store: KnowledgeStore, cutoff: int) -> EffectCheck:
    graph = store.graph
    residual = []
    if graph.has_node(target):
        residual = list(graph.edges_from(target, EdgeKind.HAS_SESSION_ON)) + list(
            graph.edges_from(target, EdgeKind.CAN_AUTH_TO)
        )
    offending = [
        e
        for e in post_events
        if e.time >= cutoff and e.outcome == "Success" and _same_identity(e.source_user, target)
    ]
    passed = not residual and not offending
    observed = []
    if residual:
        observed.append(f"{len(residual)} session/auth edges remain")
    if offending:
        observed.append(f"{len(offending)} successful auth events by {target}")
    return EffectCheck(
        predicate=f"disabled({target})",
        expected=f"no session or auth-path edges and no successful auth events by {target}",
        observed="; ".join(observed) or "no residual sessions or activity",
        passed=passed,
    )


def _check_attr(target: str, attr: str, value: str, store: KnowledgeStore) -> EffectCheck:
    graph = store.graph
    actual = graph.nodes[target].attr(attr) if graph.has_node(target) else None
    return EffectCheck(
        predicate=f"attr({target}.{attr})",
        expected=value,
        observed=str(actual),
        passed=actual == value,
    )


def assess_outcome(
    report: ExecutionReport,
    post_events: Sequence[AuthEvent],
    store: KnowledgeStore,
    config: MonitorConfig | None = None,
    baseline: Baseline | None = None,
    detection_config: DetectionConfig | None = None,
    correlation_entities: Sequence[str] = (),
) -> OutcomeAssessment:
    """Evaluate intended effects of a live execution.

    ``post_events`` may be empty; checks then rest on graph state alone.
    When a baseline and detection config are supplied, fresh alerts over
    the post-execution window touching the correlated entities are
    attached by id.
    """
    if report.mode is not ExecutionMode.LIVE:
        raise ValidationError("outcome assessment requires a live execution report")
    cfg = config or MonitorConfig()
    applied = [s for s in report.steps if s.status is StepStatus.APPLIED and s.delta and not s.delta.is_empty()]

    # post_events carry dataset-relative times and are post-execution by
    # contract; the correlation window bounds how far past the first of
    # them observations still count.
    cutoff = min((e.time for e in post_events), default=0)
    window_events = [e for e in post_events if e.time - cutoff <= cfg.correlation_window_s]

    checks: list[EffectCheck] = []
    affected: list[str] = []
    for step in applied:
        affected.append(step.target)
        if step.primitive == "ISOLATE_HOST":
            checks.append(_check_isolation(step.target, window_events, store, cutoff))
        elif step.primitive == "DISABLE_USER":
            checks.append(_check_user_disabled(step.target, window_events, store, cutoff))
        elif step.primitive == "QUARANTINE_ACCESS":
            checks.append(_check_isolation(step.target, window_events, store, cutoff))
        elif step.primitive == "ENABLE_MFA":
            checks.append(_check_attr(step.target, "mfa_enforced", "true", store))
        elif step.primitive == "REVOKE_SESSION":
            checks.append(_check_user_disabled(step.target, window_events, store, cutoff))
        elif step.primitive == "RESTRICT_PRIVILEGES":
            graph = store.graph
            remaining = len(graph.edges_from(step.target, EdgeKind.ADMIN_OF)) if graph.has_node(step.target) else 0
            checks.append(
                EffectCheck(
                    predicate=f"restricted({step.target})",
                    expected="no AdminOf edges remain",
                    observed=f"{remaining} AdminOf edges",
                    passed=remaining == 0,
                )
            )

    correlated: list[str] = []
    if baseline is not None and detection_config is not None and post_events:
        entities = set(correlation_entities) | set(affected)
        for alert in detect_anomalies(post_events, baseline, detection_config):
            rep = alert.triggering_events[-1]
            touched = {rep.source_host, rep.dest_host}
            touched.update({rep.source_user, rep.dest_user})
            touched.update({u.split("@", 1)[0] for u in (rep.source_user, rep.dest_user)})
            if touched & entities:
                correlated.append(alert.alert_id)

    if not checks:
        verdict = OutcomeVerdict.ACHIEVED  # vacuous: nothing mutated, nothing to verify
    elif all(c.passed for c in checks):
        verdict = OutcomeVerdict.ACHIEVED
    elif not any(c.passed for c in checks):
        verdict = OutcomeVerdict.FAILED
    else:
        verdict = OutcomeVerdict.PARTIALLY_ACHIEVED

    rollback_recommended = False
    if verdict is OutcomeVerdict.FAILED:
        rollback_recommended = cfg.rollback_on_failed
    elif verdict is OutcomeVerdict.PARTIALLY_ACHIEVED:
        rollback_recommended = cfg.rollback_on_partial

    return OutcomeAssessment(
        playbook_id=report.playbook_id,
        checks=tuple(checks),
        correlated_alert_ids=tuple(sorted(set(correlated))),
        verdict=verdict,
        rollback_recommended=rollback_recommended,
        affected_entities=tuple(sorted(dict.fromkeys(affected))),
    )


def emit_feedback(assessment: OutcomeAssessment, store: KnowledgeStore) -> KnowledgeDelta:
    """Write outcome attributes back to the store and return the delta.

    Achieved tags affected entities containment-verified; a failed or
    partial outcome leaves a deviation marker that later enrichment turns
    into evidence. Attribute updates only -- no topology edges. An empty
    assessment produces an empty delta and leaves the version unchanged.
    """
    graph = store.graph
    ops: list[DeltaOp] = []
    for entity in assessment.affected_entities:
        node = graph.nodes.get(entity)
        if node is None:
            logger.warning("feedback target %s no longer in graph; skipped", entity)
            continue
        if assessment.verdict is OutcomeVerdict.ACHIEVED:
            key, value = "containment_verified", "true"
        else:
            key, value = "deviation_flagged", "true"
        if node.attr(key) == value:
            continue
        ops.append(
            DeltaOp(op="set_attr", node_id=entity, attr_key=key, attr_new=value, attr_old=node.attr(key))
        )
    delta = KnowledgeDelta(
        delta_id=store.next_delta_id() if ops else "D-noop",
        ops=tuple(ops),
        provenance=Provenance.MONITOR_OBSERVATION,
        timestamp=0,
    )
    if not delta.is_empty():
        store.apply_delta(delta)
    return delta
