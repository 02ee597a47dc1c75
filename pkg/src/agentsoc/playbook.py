"""Response playbooks: synthesis, guardrails, execution, rollback.

Action primitives carry graph-level semantics as invertible knowledge
deltas, so containment is measurable and every live execution ships a
rollback plan. Executions default to dry-run: deltas are validated on a
scratch copy and the store version never moves.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Protocol, Sequence

from .errors import ExecutionError, RollbackConflictError, ValidationError
from .knowledge import (
    DeltaOp,
    EdgeKind,
    EnterpriseGraph,
    KnowledgeDelta,
    KnowledgeStore,
    NodeKind,
    PolicyConstraint,
    PolicyEffect,
    Provenance,
    apply_ops,
    canonical_json,
)
from .perception import IncidentObject
from .rsem import RankedAction
from .sse import FeasibilityStatus, FeasibilityVerdict

logger = logging.getLogger(__name__)


class ActionPrimitive(str, Enum):
    REVOKE_SESSION = "REVOKE_SESSION"
    RESTRICT_PRIVILEGES = "RESTRICT_PRIVILEGES"
    ENABLE_MFA = "ENABLE_MFA"
    QUARANTINE_ACCESS = "QUARANTINE_ACCESS"
    ISOLATE_HOST = "ISOLATE_HOST"
    DISABLE_USER = "DISABLE_USER"
    MONITOR_ONLY = "MONITOR_ONLY"


@dataclass(frozen=True)
class PrimitiveSpec:
    primitive: ActionPrimitive
    target_kinds: frozenset[NodeKind]
    disruption_factor: float
    execution_cost: float
    mutating: bool = True


PRIMITIVES: dict[str, PrimitiveSpec] = {
    spec.primitive.value: spec
    for spec in (
        PrimitiveSpec(ActionPrimitive.REVOKE_SESSION, frozenset({NodeKind.USER}), 0.3, 0.1),
        PrimitiveSpec(ActionPrimitive.RESTRICT_PRIVILEGES, frozenset({NodeKind.USER}), 0.5, 0.2),
        PrimitiveSpec(ActionPrimitive.ENABLE_MFA, frozenset({NodeKind.USER}), 0.1, 0.1),
        PrimitiveSpec(
            ActionPrimitive.QUARANTINE_ACCESS, frozenset({NodeKind.HOST, NodeKind.USER}), 0.8, 0.3
        ),
        PrimitiveSpec(ActionPrimitive.ISOLATE_HOST, frozenset({NodeKind.HOST}), 1.0, 0.3),
        PrimitiveSpec(ActionPrimitive.DISABLE_USER, frozenset({NodeKind.USER}), 1.0, 0.2),
        PrimitiveSpec(
            ActionPrimitive.MONITOR_ONLY,
            frozenset({NodeKind.HOST, NodeKind.USER, NodeKind.GROUP, NodeKind.SERVICE}),
            0.0,
            0.0,
            mutating=False,
        ),
    )
}


def build_primitive_delta(
    primitive: str,
    target: str,
    graph: EnterpriseGraph,
    delta_id: str,
    parameters: Mapping[str, str] | None = None,
    timestamp: int = 0,
) -> KnowledgeDelta:
    """Instantiate a primitive's graph mutation against a concrete graph."""
    params = parameters or {}
    spec = PRIMITIVES.get(primitive)
    if spec is None:
        raise ValidationError(f"unknown action primitive {primitive!r}")
    ops: list[DeltaOp] = []
    if spec.mutating:
        node = graph.nodes.get(target)
        if node is None:
            raise ValidationError(f"target {target!r} not in graph")
        if node.kind not in spec.target_kinds:
            raise ValidationError(
                f"{primitive} cannot target {node.kind.value} node {target!r}"
            )
        if primitive == "ISOLATE_HOST":
            for edge in graph.edges_touching(target, kinds=[EdgeKind.REACHABLE]):
                ops.append(DeltaOp(op="remove_edge", edge=edge))
        elif primitive == "DISABLE_USER":
            for kind in (EdgeKind.HAS_SESSION_ON, EdgeKind.CAN_AUTH_TO):
                for edge in graph.edges_from(target, kind):
                    ops.append(DeltaOp(op="remove_edge", edge=edge))
        elif primitive == "REVOKE_SESSION":
            host = params.get("host")
            sessions = graph.edges_from(target, EdgeKind.HAS_SESSION_ON)
            for edge in sessions:
                if host is None or edge.dst == host:
                    ops.append(DeltaOp(op="remove_edge", edge=edge))
                    break
        elif primitive == "RESTRICT_PRIVILEGES":
            for edge in graph.edges_from(target, EdgeKind.ADMIN_OF):
                ops.append(DeltaOp(op="remove_edge", edge=edge))
        elif primitive == "QUARANTINE_ACCESS":
            kinds = [EdgeKind.REACHABLE, EdgeKind.CAN_AUTH_TO, EdgeKind.HAS_SESSION_ON]
            for edge in graph.edges_touching(target, kinds=kinds):
                ops.append(DeltaOp(op="remove_edge", edge=edge))
        elif primitive == "ENABLE_MFA":
            ops.append(
                DeltaOp(
                    op="set_attr",
                    node_id=target,
                    attr_key="mfa_enforced",
                    attr_new="true",
                    attr_old=node.attr("mfa_enforced"),
                )
            )
    return KnowledgeDelta(
        delta_id=delta_id,
        ops=tuple(ops),
        provenance=Provenance.EXECUTION_OUTCOME,
        timestamp=timestamp,
    )


# ---------------------------------------------------------------------------
# Playbook model
# ---------------------------------------------------------------------------

class PlaybookStatus(str, Enum):
    DRAFT = "Draft"
    APPROVED = "Approved"
    AWAITING_ANALYST = "AwaitingAnalyst"
    REJECTED = "Rejected"
    EXECUTED = "Executed"
    ROLLED_BACK = "RolledBack"


ALLOWED_TRANSITIONS: dict[PlaybookStatus, frozenset[PlaybookStatus]] = {
    PlaybookStatus.DRAFT: frozenset(
        {PlaybookStatus.APPROVED, PlaybookStatus.AWAITING_ANALYST, PlaybookStatus.REJECTED}
    ),
    PlaybookStatus.AWAITING_ANALYST: frozenset({PlaybookStatus.APPROVED, PlaybookStatus.REJECTED}),
    PlaybookStatus.APPROVED: frozenset({PlaybookStatus.EXECUTED}),
    PlaybookStatus.EXECUTED: frozenset({PlaybookStatus.ROLLED_BACK}),
    PlaybookStatus.REJECTED: frozenset(),
    PlaybookStatus.ROLLED_BACK: frozenset(),
}


@dataclass(frozen=True)
class PlaybookStep:
    primitive: str
    target: str
    parameters: tuple[tuple[str, str], ...] = ()
    provenance: str = ""  # ranked action id or dependency note
    impact: float = 0.0
    composite: float | None = None

    def params(self) -> dict[str, str]:
        return dict(self.parameters)

    def to_json(self) -> dict:
        return {
            "primitive": self.primitive,
            "target": self.target,
            "parameters": dict(self.parameters),
            "provenance": self.provenance,
            "impact": self.impact,
            "composite": self.composite,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "PlaybookStep":
        return cls(
            primitive=doc["primitive"],
            target=doc["target"],
            parameters=tuple(sorted((str(k), str(v)) for k, v in doc.get("parameters", {}).items())),
            provenance=doc.get("provenance", ""),
            impact=float(doc.get("impact", 0.0)),
            composite=doc.get("composite"),
        )


@dataclass
class Playbook:
    playbook_id: str
    incident_id: str
    steps: list[PlaybookStep]
    projected_impact: float
    created_at: int
    status: PlaybookStatus = PlaybookStatus.DRAFT

    def __post_init__(self) -> None:
        if not self.steps:
            raise ValidationError("playbook must have at least one step")

    def transition(self, new_status: PlaybookStatus) -> None:
        if new_status not in ALLOWED_TRANSITIONS[self.status]:
            raise ValidationError(
                f"illegal playbook transition {self.status.value} -> {new_status.value}"
            )
        self.status = new_status

    def to_json(self) -> dict:
        return {
            "playbook_id": self.playbook_id,
            "incident_id": self.incident_id,
            "steps": [s.to_json() for s in self.steps],
            "projected_impact": self.projected_impact,
            "created_at": self.created_at,
            "status": self.status.value,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "Playbook":
        return cls(
            playbook_id=doc["playbook_id"],
            incident_id=doc["incident_id"],
            steps=[PlaybookStep.from_json(s) for s in doc["steps"]],
            projected_impact=float(doc["projected_impact"]),
            created_at=int(doc["created_at"]),
            status=PlaybookStatus(doc["status"]),
        )


def synthesize_playbook(
    incident: IncidentObject,
    verdicts: Sequence[FeasibilityVerdict],
    ranked: Sequence[RankedAction],
    policies: Sequence[PolicyConstraint],
    graph: EnterpriseGraph,
    impact_params=None,
    default_impact: float = 0.5,
) -> Playbook:
    """Top-ranked action plus low-impact complements for open dependencies.

    Candidates statically forbidden by policy are skipped; if nothing
    survives, the playbook degrades to MONITOR_ONLY rather than failing.
    """
    from .rsem import estimate_impact

    if not ranked:
        raise ValidationError("ranked action list must be non-empty")

    def forbidden(primitive: str, target: str) -> bool:
        node = graph.nodes.get(target)
        return any(
            p.effect is PolicyEffect.FORBID and p.matches(primitive, node) for p in policies
        )

    steps: list[PlaybookStep] = []
    for action in ranked:
        cand = action.candidate
        if forbidden(cand.primitive, cand.target):
            logger.info("skipping %s on %s: forbidden by policy", cand.primitive, cand.target)
            continue
        steps.append(
            PlaybookStep(
                primitive=cand.primitive,
                target=cand.target,
                provenance=cand.action_id,
                impact=cand.business_impact,
                composite=action.composite,
            )
        )
        break

    if steps and steps[0].primitive != "MONITOR_ONLY":
        # Complement remaining conditional dependencies with low-impact steps.
        cred_dependency = any(
            v.status is FeasibilityStatus.CONDITIONALLY_FEASIBLE
            and any(d.predicate.kind == "creds_on_host" for d in v.dependencies)
            for v in verdicts
        )
        actor = incident.user.id
        already = {(s.primitive, s.target) for s in steps}
        if (
            cred_dependency
            and incident.user.known
            and graph.has_node(actor)
            and ("ENABLE_MFA", actor) not in already
            and not forbidden("ENABLE_MFA", actor)
        ):
            spec = PRIMITIVES["ENABLE_MFA"]
            impact = estimate_impact(
                "ENABLE_MFA", actor, impact_params or {}, spec.disruption_factor, default_impact
            )
            steps.append(
                PlaybookStep(
                    primitive="ENABLE_MFA",
                    target=actor,
                    provenance="dependency:creds_on_host",
                    impact=impact,
                )
            )

    if not steps:
        steps = [
            PlaybookStep(
                primitive="MONITOR_ONLY",
                target=incident.source_host.id,
                provenance="fallback:all-candidates-forbidden",
                impact=0.0,
            )
        ]

    return Playbook(
        playbook_id=f"PB-{incident.incident_id}",
        incident_id=incident.incident_id,
        steps=steps,
        projected_impact=max(s.impact for s in steps),
        created_at=incident.created_at,
    )


# ---------------------------------------------------------------------------
# Guardrails
# ---------------------------------------------------------------------------

class GuardrailOutcome(str, Enum):
    AUTO_EXECUTE = "AutoExecute"
    REQUIRES_ANALYST = "RequiresAnalyst"
    REJECTED = "Rejected"


@dataclass(frozen=True)
class GuardrailDecision:
    outcome: GuardrailOutcome
    triggered_rules: tuple[str, ...]
    explanation: str

    def to_json(self) -> dict:
        return {
            "outcome": self.outcome.value,
            "triggered_rules": list(self.triggered_rules),
            "explanation": self.explanation,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "GuardrailDecision":
        return cls(
            outcome=GuardrailOutcome(doc["outcome"]),
            triggered_rules=tuple(doc["triggered_rules"]),
            explanation=doc["explanation"],
        )


def evaluate_guardrails(
    playbook: Playbook,
    policies: Sequence[PolicyConstraint],
    impact_threshold: float,
    graph: EnterpriseGraph,
) -> GuardrailDecision:
    """Forbid policies first, then RequireApproval, then the impact gate."""
    if not 0.0 <= impact_threshold <= 1.0:
        raise ValidationError("impact_threshold must be in [0, 1]")
    forbid_hits: list[str] = []
    approval_hits: list[str] = []
    for step in playbook.steps:
        node = graph.nodes.get(step.target)
        for policy in policies:
            if not policy.matches(step.primitive, node):
                continue
            if policy.effect is PolicyEffect.FORBID:
                forbid_hits.append(policy.policy_id)
            else:
                approval_hits.append(policy.policy_id)
    if forbid_hits:
        rules = tuple(dict.fromkeys(forbid_hits))
        return GuardrailDecision(
            outcome=GuardrailOutcome.REJECTED,
            triggered_rules=rules,
            explanation=f"forbidden by policy: {', '.join(rules)}",
        )
    if approval_hits or playbook.projected_impact >= impact_threshold:
        rules = tuple(dict.fromkeys(approval_hits))
        reasons = []
        if rules:
            reasons.append(f"approval required by policy: {', '.join(rules)}")
        if playbook.projected_impact >= impact_threshold:
            reasons.append(
                f"projected impact {playbook.projected_impact:.2f} >= threshold {impact_threshold:.2f}"
            )
        return GuardrailDecision(
            outcome=GuardrailOutcome.REQUIRES_ANALYST,
            triggered_rules=rules,
            explanation="; ".join(reasons),
        )
    return GuardrailDecision(
        outcome=GuardrailOutcome.AUTO_EXECUTE,
        triggered_rules=(),
        explanation=f"projected impact {playbook.projected_impact:.2f} below threshold "
        f"{impact_threshold:.2f}; no policy matched",
    )


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------

class ExecutionMode(str, Enum):
    DRY_RUN = "DryRun"
    LIVE = "Live"


class StepStatus(str, Enum):
    SIMULATED = "Simulated"
    APPLIED = "Applied"
    FAILED = "Failed"
    SKIPPED = "Skipped"


@dataclass
class StepResult:
    step_index: int
    primitive: str
    target: str
    status: StepStatus
    delta: KnowledgeDelta | None
    started_at: float
    ended_at: float
    error: str = ""

    def to_json(self) -> dict:
        return {
            "step_index": self.step_index,
            "primitive": self.primitive,
            "target": self.target,
            "status": self.status.value,
            "delta": self.delta.to_json() if self.delta else None,
            "started_at": self.started_at,
            "ended_at": self.ended_at,
            "error": self.error,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "StepResult":
        return cls(
            step_index=int(doc["step_index"]),
            primitive=doc["primitive"],
            target=doc["target"],
            status=StepStatus(doc["status"]),
            delta=KnowledgeDelta.from_json(doc["delta"]) if doc.get("delta") else None,
            started_at=float(doc["started_at"]),
            ended_at=float(doc["ended_at"]),
            error=doc.get("error", ""),
        )


@dataclass
class AuditEntry:
    playbook_id: str
    step_index: int
    primitive: str
    target: str
    mode: str
    status: str
    started_at: float
    ended_at: float
    delta_id: str | None

    def to_json(self) -> dict:
        return {
            "playbook_id": self.playbook_id,
            "step_index": self.step_index,
            "primitive": self.primitive,
            "target": self.target,
            "mode": self.mode,
            "status": self.status,
            "started_at": self.started_at,
            "ended_at": self.ended_at,
            "delta_id": self.delta_id,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "AuditEntry":
        return cls(
            playbook_id=doc["playbook_id"],
            step_index=int(doc["step_index"]),
            primitive=doc["primitive"],
            target=doc["target"],
            mode=doc["mode"],
            status=doc["status"],
            started_at=float(doc["started_at"]),
            ended_at=float(doc["ended_at"]),
            delta_id=doc.get("delta_id"),
        )


@dataclass
class ExecutionReport:
    playbook_id: str
    mode: ExecutionMode
    steps: list[StepResult]
    audit_entries: list[AuditEntry]
    rollback_plan: list[KnowledgeDelta]  # inverse deltas, reverse step order
    version_before: int
    version_after: int
    rolled_back: bool = False

    def has_failures(self) -> bool:
        return any(s.status is StepStatus.FAILED for s in self.steps)

    def applied_deltas(self) -> list[KnowledgeDelta]:
        return [s.delta for s in self.steps if s.status is StepStatus.APPLIED and s.delta]

    def to_json(self) -> dict:
        return {
            "playbook_id": self.playbook_id,
            "mode": self.mode.value,
            "steps": [s.to_json() for s in self.steps],
            "audit_entries": [a.to_json() for a in self.audit_entries],
            "rollback_plan": [d.to_json() for d in self.rollback_plan],
            "version_before": self.version_before,
            "version_after": self.version_after,
            "rolled_back": self.rolled_back,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "ExecutionReport":
        return cls(
            playbook_id=doc["playbook_id"],
            mode=ExecutionMode(doc["mode"]),
            steps=[StepResult.from_json(s) for s in doc["steps"]],
            audit_entries=[AuditEntry.from_json(a) for a in doc["audit_entries"]],
            rollback_plan=[KnowledgeDelta.from_json(d) for d in doc["rollback_plan"]],
            version_before=int(doc["version_before"]),
            version_after=int(doc["version_after"]),
            rolled_back=bool(doc.get("rolled_back", False)),
        )


class Executor(Protocol):
    """Applies a step's delta. The built-in executor mutates only the
    knowledge graph; SOAR/EDR/IAM connectors would implement this surface."""

    def apply(self, store: KnowledgeStore, delta: KnowledgeDelta) -> int: ...


class SimulatedExecutor:
    def apply(self, store: KnowledgeStore, delta: KnowledgeDelta) -> int:
        return store.apply_delta(delta)


@dataclass
class AuditLog:
    path: Path | None = None
    entries: list[AuditEntry] = field(default_factory=list)

    def record(self, entry: AuditEntry) -> None:
        self.entries.append(entry)
        if self.path is not None:
            import json as _json

            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(_json.dumps(entry.to_json(), sort_keys=True) + "\n")


def execute_playbook(
    playbook: Playbook,
    mode: ExecutionMode,
    store: KnowledgeStore,
    executor: Executor | None = None,
    audit_log: AuditLog | None = None,
) -> ExecutionReport:
    """Run the playbook's steps in order.

    DryRun computes and validates every delta against a scratch copy and
    leaves the store version untouched. Live applies deltas through the
    store writer, halting on the first failure with the rollback plan
    covering the steps that did apply.
    """
    if mode is ExecutionMode.LIVE and playbook.status is not PlaybookStatus.APPROVED:
        raise ExecutionError(f"live execution requires Approved status, got {playbook.status.value}")
    if mode is ExecutionMode.DRY_RUN and playbook.status not in (
        PlaybookStatus.APPROVED,
        PlaybookStatus.DRAFT,
    ):
        raise ExecutionError(f"dry-run requires Draft or Approved status, got {playbook.status.value}")

    executor = executor or SimulatedExecutor()
    audit = audit_log or AuditLog()
    run_entries: list[AuditEntry] = []

    def record(entry: AuditEntry) -> None:
        run_entries.append(entry)
        audit.record(entry)

    version_before = store.version
    scratch = store.graph  # dry-run working view
    steps: list[StepResult] = []
    failed = False

    for index, step in enumerate(playbook.steps):
        started = time.time()
        if failed:
            steps.append(
                StepResult(
                    step_index=index,
                    primitive=step.primitive,
                    target=step.target,
                    status=StepStatus.SKIPPED,
                    delta=None,
                    started_at=started,
                    ended_at=started,
                )
            )
            record(
                AuditEntry(
                    playbook_id=playbook.playbook_id,
                    step_index=index,
                    primitive=step.primitive,
                    target=step.target,
                    mode=mode.value,
                    status=StepStatus.SKIPPED.value,
                    started_at=started,
                    ended_at=started,
                    delta_id=None,
                )
            )
            continue
        try:
            base_graph = store.graph if mode is ExecutionMode.LIVE else scratch
            delta = build_primitive_delta(
                step.primitive,
                step.target,
                base_graph,
                delta_id=store.next_delta_id(),
                parameters=step.params(),
                timestamp=playbook.created_at,
            )
            if mode is ExecutionMode.LIVE:
                if not delta.is_empty():
                    executor.apply(store, delta)
                status = StepStatus.APPLIED
            else:
                if not delta.is_empty():
                    scratch = apply_ops(scratch, delta.ops, version=scratch.version)
                status = StepStatus.SIMULATED
            result = StepResult(
                step_index=index,
                primitive=step.primitive,
                target=step.target,
                status=status,
                delta=delta,
                started_at=started,
                ended_at=time.time(),
            )
        except Exception as exc:  # noqa: BLE001 - step isolation
            failed = True
            result = StepResult(
                step_index=index,
                primitive=step.primitive,
                target=step.target,
                status=StepStatus.FAILED,
                delta=None,
                started_at=started,
                ended_at=time.time(),
                error=str(exc),
            )
        steps.append(result)
        record(
            AuditEntry(
                playbook_id=playbook.playbook_id,
                step_index=index,
                primitive=step.primitive,
                target=step.target,
                mode=mode.value,
                status=result.status.value,
                started_at=result.started_at,
                ended_at=result.ended_at,
                delta_id=result.delta.delta_id if result.delta else None,
            )
        )

    mutated = [
        s
        for s in steps
        if s.status in (StepStatus.APPLIED, StepStatus.SIMULATED) and s.delta and not s.delta.is_empty()
    ]
    rollback_plan = [s.delta.inverse() for s in reversed(mutated)]

    report = ExecutionReport(
        playbook_id=playbook.playbook_id,
        mode=mode,
        steps=steps,
        audit_entries=run_entries,
        rollback_plan=rollback_plan,
        version_before=version_before,
        version_after=store.version,
    )
    if playbook.status is PlaybookStatus.APPROVED:
        playbook.transition(PlaybookStatus.EXECUTED)
    return report


def snapshot_bytes(store: KnowledgeStore) -> str:
    return canonical_json(store.to_json())


def rollback(
    report: ExecutionReport,
    store: KnowledgeStore,
    playbook: Playbook | None = None,
) -> int:
    """Apply the report's inverse deltas in order (already reversed).

    Validates the whole plan against a scratch graph first so a diverged
    store yields a conflict error with no partial rollback. Returns the
    number of deltas applied; a second call is a warning no-op.
    """
    if report.rolled_back:
        logger.warning("rollback of %s already performed; ignoring", report.playbook_id)
        return 0
    if report.mode is not ExecutionMode.LIVE:
        raise ValidationError("only live executions can be rolled back")
    applied = report.applied_deltas()
    if not applied:
        raise ValidationError("execution applied no steps; nothing to roll back")
    inverses = [d.inverse() for d in reversed(applied)]
    scratch = store.graph
    try:
        for inv in inverses:
            scratch = apply_ops(scratch, inv.ops, version=scratch.version)
    except Exception as exc:
        raise RollbackConflictError(
            f"store diverged since execution; rollback aborted: {exc}"
        ) from exc
    for inv in inverses:
        store.apply_delta(inv)
    report.rolled_back = True
    if playbook is not None and playbook.status is PlaybookStatus.EXECUTED:
        playbook.transition(PlaybookStatus.ROLLED_BACK)
    return len(inverses)
