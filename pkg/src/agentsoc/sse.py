"""Structural simulation engine: validate hypothesis chains on the graph.

Chains are simulated step by step against an immutable graph version with
three-valued precondition logic: Satisfied and Unsatisfied are decided
from graph facts; Unknown is reserved for fact categories the snapshot
declares unmodeled. Any Unsatisfied precondition makes the chain
infeasible; Unknowns are carried forward optimistically as dependencies.
The graph is never mutated -- effects apply to a simulated actor state only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Mapping, Sequence

from .errors import UnknownEntityError, ValidationError
from .knowledge import (
    EdgeKind,
    EnterpriseGraph,
    NodeKind,
    Predicate,
    TechniqueSpec,
    privilege_tier,
)
from .perception import IncidentObject

logger = logging.getLogger(__name__)


class PreconditionStatus(str, Enum):
    SATISFIED = "Satisfied"
    UNSATISFIED = "Unsatisfied"
    UNKNOWN = "Unknown"


class FeasibilityStatus(str, Enum):
    FEASIBLE = "Feasible"
    CONDITIONALLY_FEASIBLE = "ConditionallyFeasible"
    INFEASIBLE = "Infeasible"


@dataclass(frozen=True)
class ActorContext:
    """Simulated attacker state while walking a chain."""

    actor: str
    sessions: tuple[str, ...]
    tier: int
    bindings: tuple[tuple[str, str], ...]  # $source/$target/$actor substitutions

    def resolve(self, token: str | None) -> str | None:
        if token is None:
            return None
        for key, value in self.bindings:
            if token == key:
                return value
        return token


@dataclass(frozen=True)
class Dependency:
    predicate: Predicate
    note: str

    def to_json(self) -> dict:
        return {"predicate": self.predicate.to_json(), "note": self.note}

    @classmethod
    def from_json(cls, doc: Mapping) -> "Dependency":
        return cls(predicate=Predicate.from_json(doc["predicate"]), note=doc["note"])


@dataclass(frozen=True)
class Witness:
    """Node/edge trace realizing the movement implied by a chain."""

    actor: str
    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str, str, str | None], ...]  # (src, dst, kind, protocol)

    def to_json(self) -> dict:
        return {
            "actor": self.actor,
            "nodes": list(self.nodes),
            "edges": [[s, d, k, p] for s, d, k, p in self.edges],
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "Witness":
        return cls(
            actor=doc["actor"],
            nodes=tuple(doc["nodes"]),
            edges=tuple((e[0], e[1], e[2], e[3]) for e in doc["edges"]),
        )


@dataclass(frozen=True)
class FeasibilityVerdict:
    hypothesis_id: str
    status: FeasibilityStatus
    dependencies: tuple[Dependency, ...] = ()
    reason: str = ""
    witness: Witness | None = None
    failed_predicate: Predicate | None = None

    def __post_init__(self) -> None:
        if self.status is FeasibilityStatus.CONDITIONALLY_FEASIBLE and not self.dependencies:
            raise ValueError("ConditionallyFeasible requires dependencies")
        if self.status is not FeasibilityStatus.CONDITIONALLY_FEASIBLE and self.dependencies:
            raise ValueError("dependencies only valid for ConditionallyFeasible")
        if self.status is FeasibilityStatus.INFEASIBLE and not self.reason:
            raise ValueError("Infeasible requires a reason")
        if self.status is not FeasibilityStatus.INFEASIBLE and self.reason:
            raise ValueError("reason only valid for Infeasible")
        if self.status is FeasibilityStatus.FEASIBLE and self.witness is None:
            raise ValueError("Feasible requires a witness")

    def to_json(self) -> dict:
        return {
            "hypothesis_id": self.hypothesis_id,
            "status": self.status.value,
            "dependencies": [d.to_json() for d in self.dependencies],
            "reason": self.reason,
            "witness": self.witness.to_json() if self.witness else None,
            "failed_predicate": self.failed_predicate.to_json() if self.failed_predicate else None,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "FeasibilityVerdict":
        return cls(
            hypothesis_id=doc["hypothesis_id"],
            status=FeasibilityStatus(doc["status"]),
            dependencies=tuple(Dependency.from_json(d) for d in doc.get("dependencies", [])),
            reason=doc.get("reason", ""),
            witness=Witness.from_json(doc["witness"]) if doc.get("witness") else None,
            failed_predicate=Predicate.from_json(doc["failed_predicate"])
            if doc.get("failed_predicate")
            else None,
        )


# ---------------------------------------------------------------------------
# Path search
# ---------------------------------------------------------------------------

def find_attack_path(
    graph: EnterpriseGraph,
    sessions: Sequence[str],
    target: str,
    kinds: Sequence[EdgeKind] = (EdgeKind.REACHABLE,),
    protocol: str | None = None,
) -> list[str] | None:
    """Shortest path from any session host to the target over the permitted
    edge kinds; ties broken by the lexicographically smallest sequence."""
    if not graph.has_node(target):
        raise UnknownEntityError(f"unknown target {target!r}")
    best: tuple[int, tuple[str, ...]] | None = None
    for start in sorted(set(sessions)):
        if not graph.has_node(start):
            continue
        path = _bounded_shortest(graph, start, target, kinds, protocol)
        if path is None:
            continue
        key = (len(path), tuple(path))
        if best is None or key < best:
            best = key
    return list(best[1]) if best else None


def _bounded_shortest(
    graph: EnterpriseGraph,
    src: str,
    dst: str,
    kinds: Sequence[EdgeKind],
    protocol: str | None,
) -> list[str] | None:
    from .knowledge import _shortest_path

    return _shortest_path(graph, src, dst, kinds, protocol)


def _path_edges(
    graph: EnterpriseGraph,
    path: Sequence[str],
    kinds: Sequence[EdgeKind],
    protocol: str | None,
) -> tuple[tuple[str, str, str, str | None], ...]:
    out = []
    for a, b in zip(path, path[1:]):
        chosen = None
        for kind in kinds:
            for edge in graph.edges_from(a, kind):
                if edge.dst == b and (protocol is None or edge.protocol == protocol):
                    chosen = (a, b, kind.value, edge.protocol)
                    break
            if chosen:
                break
        if chosen is None:  # pragma: no cover - path came from the same graph
            raise ValidationError(f"no edge realizes hop {a}->{b}")
        out.append(chosen)
    return tuple(out)


# ---------------------------------------------------------------------------
# Precondition evaluation
# ---------------------------------------------------------------------------

def _note_for(pred: Predicate, ctx: ActorContext) -> str:
    kind = pred.kind
    if kind == "creds_on_host":
        tier = pred.param("tier", "?")
        host = ctx.resolve(pred.param("host"))
        return f"Tier-{tier} creds exist on {host}"
    if kind == "service_task_association":
        user = ctx.resolve(pred.param("user")) or ctx.actor
        return f"service/task associated with {user}"
    if kind == "has_session":
        return f"actor session on {ctx.resolve(pred.param('host'))}"
    if kind == "edge_exists":
        return (
            f"edge {pred.param('kind')} {ctx.resolve(pred.param('src'))}->"
            f"{ctx.resolve(pred.param('dst'))}"
        )
    if kind == "tier_at_most":
        return f"actor tier <= {pred.param('tier')}"
    if kind == "reachable_from_session":
        proto = pred.param("protocol")
        suffix = f" over {proto}" if proto else ""
        return f"network path to {ctx.resolve(pred.param('target'))}{suffix}"
    if kind == "attr_absent":
        return f"{ctx.resolve(pred.param('node'))} lacks attribute {pred.param('attr')}"
    if kind == "attr_equals":
        return f"{ctx.resolve(pred.param('node'))}.{pred.param('attr')} == {pred.param('value')}"
    return kind


def check_precondition(
    pred: Predicate,
    ctx: ActorContext,
    graph: EnterpriseGraph,
) -> PreconditionStatus:
    """Evaluate one predicate against graph facts and simulated actor state.

    Unknown is returned only when the predicate's fact category is listed
    in the snapshot's unmodeled set; a missing individual fact is simply
    Unsatisfied.
    """
    if pred.kind in graph.unmodeled_facts:
        return PreconditionStatus.UNKNOWN

    if pred.kind == "has_session":
        host = ctx.resolve(pred.param("host"))
        return _status(host in ctx.sessions)

    if pred.kind == "edge_exists":
        src = ctx.resolve(pred.param("src"))
        dst = ctx.resolve(pred.param("dst"))
        kind_token = pred.param("kind")
        if src is None or dst is None or kind_token is None:
            raise ValidationError(f"edge_exists requires src, dst, kind: {pred.to_json()}")
        try:
            kind = EdgeKind(kind_token)
        except ValueError:
            raise ValidationError(f"unknown edge kind {kind_token!r}") from None
        if not (graph.has_node(src) and graph.has_node(dst)):
            return PreconditionStatus.UNSATISFIED
        return _status(graph.edge_exists(src, dst, kind, pred.param("protocol")))

    if pred.kind == "tier_at_most":
        limit = int(pred.param("tier", "1"))
        return _status(ctx.tier <= limit)

    if pred.kind == "reachable_from_session":
        target = ctx.resolve(pred.param("target"))
        if target is None or not graph.has_node(target):
            return PreconditionStatus.UNSATISFIED
        path = find_attack_path(graph, ctx.sessions, target, protocol=pred.param("protocol"))
        return _status(path is not None)

    if pred.kind == "creds_on_host":
        host = ctx.resolve(pred.param("host"))
        tier = pred.param("tier", "1")
        if host is None or not graph.has_node(host):
            return PreconditionStatus.UNSATISFIED
        cached = graph.nodes[host].attr("cached_cred_tiers", "") or ""
        tiers = {t.strip() for t in cached.split(",") if t.strip()}
        return _status(tier in tiers)

    if pred.kind == "service_task_association":
        user = ctx.resolve(pred.param("user")) or ctx.actor
        if not graph.has_node(user):
            return PreconditionStatus.UNSATISFIED
        tasks = graph.nodes[user].attr("service_tasks", "") or ""
        return _status(bool(tasks.strip()))

    if pred.kind == "attr_absent":
        node_id = ctx.resolve(pred.param("node"))
        attr = pred.param("attr")
        if node_id is None or attr is None:
            raise ValidationError(f"attr_absent requires node and attr: {pred.to_json()}")
        if not graph.has_node(node_id):
            return PreconditionStatus.UNSATISFIED
        return _status(graph.nodes[node_id].attr(attr) is None)

    if pred.kind == "attr_equals":
        node_id = ctx.resolve(pred.param("node"))
        attr = pred.param("attr")
        if node_id is None or attr is None:
            raise ValidationError(f"attr_equals requires node and attr: {pred.to_json()}")
        if not graph.has_node(node_id):
            return PreconditionStatus.UNSATISFIED
        return _status(graph.nodes[node_id].attr(attr) == pred.param("value"))

    raise ValidationError(f"unhandled predicate kind {pred.kind!r}")


def _status(truth: bool) -> PreconditionStatus:
    return PreconditionStatus.SATISFIED if truth else PreconditionStatus.UNSATISFIED


# ---------------------------------------------------------------------------
# Chain validation
# ---------------------------------------------------------------------------

def actor_context_for(incident: IncidentObject, graph: EnterpriseGraph) -> ActorContext:
    actor = incident.user.id
    source = incident.source_host.id
    target = incident.target_host.id if incident.target_host else None
    tier = incident.user.privilege_tier
    if tier is None:
        if graph.has_node(actor) and graph.nodes[actor].kind is NodeKind.USER:
            tier = privilege_tier(graph, actor)
        else:
            tier = 99  # unknown actor: assume least privilege
    bindings = [("$actor", actor), ("$source", source)]
    if target is not None:
        bindings.append(("$target", target))
    return ActorContext(actor=actor, sessions=(source,), tier=tier, bindings=tuple(bindings))


def validate_hypothesis(
    hypothesis,
    incident: IncidentObject,
    graph: EnterpriseGraph,
    catalog: Mapping[str, TechniqueSpec],
) -> FeasibilityVerdict:
    """Simulate a technique chain; see module docstring for the semantics."""
    for tid in hypothesis.technique_chain:
        if tid not in catalog:
            raise ValidationError(f"technique {tid!r} not in catalog")

    ctx = actor_context_for(incident, graph)
    dependencies: list[Dependency] = []
    witness_nodes: list[str] = [ctx.sessions[0]]
    witness_edges: list[tuple[str, str, str, str | None]] = []

    for tid in hypothesis.technique_chain:
        spec = catalog[tid]
        unknowns: list[Predicate] = []
        for pred in spec.preconditions:
            status = check_precondition(pred, ctx, graph)
            if status is PreconditionStatus.UNSATISFIED:
                note = _note_for(pred, ctx)
                return FeasibilityVerdict(
                    hypothesis_id=hypothesis.hypothesis_id,
                    status=FeasibilityStatus.INFEASIBLE,
                    reason=f"{spec.technique_id} ({spec.name}): no {note}",
                    failed_predicate=pred,
                )
            if status is PreconditionStatus.UNKNOWN:
                unknowns.append(pred)
        for pred in unknowns:
            dependencies.append(Dependency(predicate=pred, note=_note_for(pred, ctx)))

        # Movement bookkeeping: a satisfied reachability precondition extends
        # the witness trace along the concrete shortest path.
        for pred in spec.preconditions:
            if pred.kind != "reachable_from_session":
                continue
            target = ctx.resolve(pred.param("target"))
            if target is None:
                continue
            path = find_attack_path(graph, ctx.sessions, target, protocol=pred.param("protocol"))
            if path is None:
                continue
            edges = _path_edges(graph, path, (EdgeKind.REACHABLE,), pred.param("protocol"))
            if witness_nodes and path and witness_nodes[-1] == path[0]:
                witness_nodes.extend(path[1:])
            else:
                witness_nodes.extend(path)
            witness_edges.extend(edges)

        sessions = set(ctx.sessions)
        tier = ctx.tier
        for eff in spec.effects:
            if eff.kind == "gain_session":
                host = ctx.resolve(eff.param("host"))
                if host is not None and graph.has_node(host):
                    sessions.add(host)
            elif eff.kind == "gain_tier":
                tier = min(tier, int(eff.param("tier", "1")))
        ctx = replace(ctx, sessions=tuple(sorted(sessions)), tier=tier)

    witness = Witness(actor=ctx.actor, nodes=tuple(witness_nodes), edges=tuple(witness_edges))
    if dependencies:
        return FeasibilityVerdict(
            hypothesis_id=hypothesis.hypothesis_id,
            status=FeasibilityStatus.CONDITIONALLY_FEASIBLE,
            dependencies=tuple(dependencies),
            witness=witness,
        )
    return FeasibilityVerdict(
        hypothesis_id=hypothesis.hypothesis_id,
        status=FeasibilityStatus.FEASIBLE,
        witness=witness,
    )


def validate_all(
    hypotheses: Sequence,
    incident: IncidentObject,
    graph: EnterpriseGraph,
    catalog: Mapping[str, TechniqueSpec],
) -> list[FeasibilityVerdict]:
    return [validate_hypothesis(h, incident, graph, catalog) for h in hypotheses]
