"""Enterprise knowledge store: entity graph, technique catalog, policies.

The graph is versioned copy-on-write: queries run against an immutable
``EnterpriseGraph`` snapshot; every mutation goes through a single-writer
``KnowledgeStore`` that publishes a new version atomically and records
the inverse delta for rollback.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import DeltaError, SnapshotError, UnknownEntityError

SNAPSHOT_SCHEMA = 1


class NodeKind(str, Enum):
    HOST = "Host"
    USER = "User"
    GROUP = "Group"
    SERVICE = "Service"


class EdgeKind(str, Enum):
    REACHABLE = "Reachable"
    MEMBER_OF = "MemberOf"
    ADMIN_OF = "AdminOf"
    HAS_SESSION_ON = "HasSessionOn"
    CAN_AUTH_TO = "CanAuthTo"
    TRUSTED_BY = "TrustedBy"


# Endpoint kind constraints; kinds not listed are unconstrained.
_EDGE_ENDPOINT_RULES: dict[EdgeKind, tuple[set[NodeKind], set[NodeKind]]] = {
    EdgeKind.REACHABLE: ({NodeKind.HOST}, {NodeKind.HOST}),
    EdgeKind.MEMBER_OF: ({NodeKind.USER}, {NodeKind.GROUP}),
    EdgeKind.ADMIN_OF: ({NodeKind.USER, NodeKind.GROUP}, {NodeKind.HOST}),
    EdgeKind.HAS_SESSION_ON: ({NodeKind.USER}, {NodeKind.HOST}),
}


@dataclass(frozen=True)
class EntityNode:
    id: str
    kind: NodeKind
    attributes: tuple[tuple[str, str], ...] = ()
    criticality: int = 0
    privilege_tier: int = 1

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("node id must be non-empty")
        if not 0 <= self.criticality <= 10:
            raise ValueError(f"criticality of {self.id} must be in [0, 10]")
        if self.privilege_tier < 1:
            raise ValueError(f"privilege_tier of {self.id} must be >= 1")

    @property
    def attrs(self) -> dict[str, str]:
        return dict(self.attributes)

    def attr(self, key: str, default: str | None = None) -> str | None:
        for k, v in self.attributes:
            if k == key:
                return v
        return default

    def tags(self) -> set[str]:
        raw = self.attr("tags", "") or ""
        return {t.strip() for t in raw.split(",") if t.strip()}

    def with_attr(self, key: str, value: str | None) -> "EntityNode":
        """New node with attribute set (or removed when value is None)."""
        items = [(k, v) for k, v in self.attributes if k != key]
        if value is not None:
            items.append((key, value))
        items.sort()
        return EntityNode(self.id, self.kind, tuple(items), self.criticality, self.privilege_tier)

    def to_json(self) -> dict:
        doc: dict = {"id": self.id, "kind": self.kind.value, "attributes": self.attrs}
        if self.kind in (NodeKind.HOST, NodeKind.SERVICE):
            doc["criticality"] = self.criticality
        if self.kind is NodeKind.USER:
            doc["privilege_tier"] = self.privilege_tier
        return doc

    @classmethod
    def from_json(cls, doc: Mapping) -> "EntityNode":
        attrs = tuple(sorted((str(k), str(v)) for k, v in (doc.get("attributes") or {}).items()))
        return cls(
            id=doc["id"],
            kind=NodeKind(doc["kind"]),
            attributes=attrs,
            criticality=int(doc.get("criticality", 0)),
            privilege_tier=int(doc.get("privilege_tier", 1)),
        )


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    kind: EdgeKind
    attributes: tuple[tuple[str, str], ...] = ()

    @property
    def protocol(self) -> str | None:
        for k, v in self.attributes:
            if k == "protocol":
                return v
        return None

    @property
    def attrs(self) -> dict[str, str]:
        return dict(self.attributes)

    def to_json(self) -> dict:
        return {"from": self.src, "to": self.dst, "kind": self.kind.value, "attributes": self.attrs}

    @classmethod
    def from_json(cls, doc: Mapping) -> "Edge":
        attrs = tuple(sorted((str(k), str(v)) for k, v in (doc.get("attributes") or {}).items()))
        return cls(src=doc["from"], dst=doc["to"], kind=EdgeKind(doc["kind"]), attributes=attrs)


def make_edge(src: str, dst: str, kind: EdgeKind, **attrs: str) -> Edge:
    return Edge(src=src, dst=dst, kind=kind, attributes=tuple(sorted(attrs.items())))


class EnterpriseGraph:
    """Immutable typed graph snapshot with adjacency indexed by (from, kind)."""

    __slots__ = ("nodes", "_out", "_in", "version", "unmodeled_facts")

    def __init__(
        self,
        nodes: Mapping[str, EntityNode],
        edges: Iterable[Edge],
        version: int = 0,
        unmodeled_facts: Iterable[str] = (),
    ):
        self.nodes: dict[str, EntityNode] = dict(nodes)
        self.version = version
        self.unmodeled_facts = frozenset(unmodeled_facts)
        self._out: dict[tuple[str, EdgeKind], tuple[Edge, ...]] = {}
        self._in: dict[str, tuple[Edge, ...]] = {}
        out_acc: dict[tuple[str, EdgeKind], list[Edge]] = {}
        in_acc: dict[str, list[Edge]] = {}
        seen: set[Edge] = set()
        for edge in edges:
            self._check_edge(edge)
            if edge in seen:
                raise SnapshotError(f"duplicate edge {edge.to_json()}")
            seen.add(edge)
            out_acc.setdefault((edge.src, edge.kind), []).append(edge)
            in_acc.setdefault(edge.dst, []).append(edge)
        for key, lst in out_acc.items():
            self._out[key] = tuple(sorted(lst, key=lambda e: (e.dst, e.attributes)))
        for key, lst in in_acc.items():
            self._in[key] = tuple(sorted(lst, key=lambda e: (e.src, e.kind.value, e.attributes)))

    def _check_edge(self, edge: Edge) -> None:
        src = self.nodes.get(edge.src)
        dst = self.nodes.get(edge.dst)
        if src is None or dst is None:
            missing = edge.src if src is None else edge.dst
            raise SnapshotError(f"edge {edge.kind.value} {edge.src}->{edge.dst} references absent node {missing!r}")
        rule = _EDGE_ENDPOINT_RULES.get(edge.kind)
        if rule is not None:
            src_ok, dst_ok = src.kind in rule[0], dst.kind in rule[1]
            if not (src_ok and dst_ok):
                raise SnapshotError(
                    f"edge {edge.kind.value} {edge.src}->{edge.dst} violates endpoint kinds "
                    f"({src.kind.value}->{dst.kind.value})"
                )

    # -- queries ------------------------------------------------------------

    def node(self, node_id: str) -> EntityNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownEntityError(f"unknown node id {node_id!r}") from None

    def has_node(self, node_id: str) -> bool:
        return node_id in self.nodes

    def edges_from(self, node_id: str, kind: EdgeKind) -> tuple[Edge, ...]:
        return self._out.get((node_id, kind), ())

    def edges_into(self, node_id: str) -> tuple[Edge, ...]:
        return self._in.get(node_id, ())

    def edges_touching(self, node_id: str, kinds: Sequence[EdgeKind] | None = None) -> list[Edge]:
        selected = set(kinds) if kinds is not None else set(EdgeKind)
        out = [e for k in selected for e in self.edges_from(node_id, k)]
        inc = [e for e in self.edges_into(node_id) if e.kind in selected and e.src != node_id]
        return sorted(out + inc, key=lambda e: (e.src, e.dst, e.kind.value, e.attributes))

    def all_edges(self) -> list[Edge]:
        edges = [e for bucket in self._out.values() for e in bucket]
        return sorted(edges, key=lambda e: (e.src, e.dst, e.kind.value, e.attributes))

    def edge_exists(self, src: str, dst: str, kind: EdgeKind, protocol: str | None = None) -> bool:
        for edge in self.edges_from(src, kind):
            if edge.dst == dst and (protocol is None or edge.protocol == protocol):
                return True
        return False

    def with_changes(
        self,
        add_nodes: Iterable[EntityNode] = (),
        remove_node_ids: Iterable[str] = (),
        add_edges: Iterable[Edge] = (),
        remove_edges: Iterable[Edge] = (),
        replace_nodes: Iterable[EntityNode] = (),
        version: int | None = None,
    ) -> "EnterpriseGraph":
        nodes = dict(self.nodes)
        for node in add_nodes:
            if node.id in nodes:
                raise DeltaError(f"node {node.id!r} already exists")
            nodes[node.id] = node
        for node in replace_nodes:
            if node.id not in nodes:
                raise DeltaError(f"cannot update absent node {node.id!r}")
            nodes[node.id] = node
        edges = set(self.all_edges())
        for edge in remove_edges:
            if edge not in edges:
                raise DeltaError(f"cannot remove absent edge {edge.to_json()}")
            edges.remove(edge)
        for node_id in remove_node_ids:
            if node_id not in nodes:
                raise DeltaError(f"cannot remove absent node {node_id!r}")
            if any(e.src == node_id or e.dst == node_id for e in edges):
                raise DeltaError(f"cannot remove node {node_id!r} while edges touch it")
            del nodes[node_id]
        for edge in add_edges:
            if edge in edges:
                raise DeltaError(f"edge already exists: {edge.to_json()}")
            edges.add(edge)
        try:
            return EnterpriseGraph(
                nodes,
                edges,
                version=self.version + 1 if version is None else version,
                unmodeled_facts=self.unmodeled_facts,
            )
        except SnapshotError as exc:
            raise DeltaError(str(exc)) from None


# ---------------------------------------------------------------------------
# Graph queries
# ---------------------------------------------------------------------------

def reachable_path(
    graph: EnterpriseGraph,
    src_host: str,
    dst_host: str,
    protocol: str | None = None,
) -> list[str] | None:
    """Shortest Reachable path, lexicographically smallest on ties."""
    src, dst = graph.node(src_host), graph.node(dst_host)
    if src.kind is not NodeKind.HOST or dst.kind is not NodeKind.HOST:
        raise UnknownEntityError(f"{src_host!r} and {dst_host!r} must be Host nodes")
    return _shortest_path(graph, src_host, dst_host, (EdgeKind.REACHABLE,), protocol)


def _neighbors(graph: EnterpriseGraph, node_id: str, kinds: Sequence[EdgeKind], protocol: str | None) -> list[str]:
    out: set[str] = set()
    for kind in kinds:
        for edge in graph.edges_from(node_id, kind):
            if protocol is None or edge.protocol == protocol:
                out.add(edge.dst)
    return sorted(out)


def _shortest_path(
    graph: EnterpriseGraph,
    src: str,
    dst: str,
    kinds: Sequence[EdgeKind],
    protocol: str | None,
) -> list[str] | None:
    if src == dst:
        return [src]
    # Distance-to-target via reverse BFS, then greedy lexicographic descent.
    reverse: dict[str, set[str]] = {}
    for edge in graph.all_edges():
        if edge.kind in kinds and (protocol is None or edge.protocol == protocol):
            reverse.setdefault(edge.dst, set()).add(edge.src)
    dist: dict[str, int] = {dst: 0}
    frontier = [dst]
    while frontier:
        nxt: list[str] = []
        for node in frontier:
            for pred in reverse.get(node, ()):
                if pred not in dist:
                    dist[pred] = dist[node] + 1
                    nxt.append(pred)
        frontier = nxt
    if src not in dist:
        return None
    path = [src]
    current = src
    while current != dst:
        step = [n for n in _neighbors(graph, current, kinds, protocol) if dist.get(n, -1) == dist[current] - 1]
        current = step[0]  # sorted; smallest id wins the tie
        path.append(current)
    return path


def privilege_tier(graph: EnterpriseGraph, user_id: str) -> int:
    """Effective tier: min of own tier and tiers granted via memberships.

    Grants come from group ``grants_tier`` attributes (via MemberOf) and
    from ``admin_tier`` attributes on hosts administered via AdminOf edges
    of the user or of any group it belongs to.
    """
    user = graph.node(user_id)
    if user.kind is not NodeKind.USER:
        raise UnknownEntityError(f"{user_id!r} is not a User node")
    tiers = [user.privilege_tier]
    admin_sources = [user_id]
    for edge in graph.edges_from(user_id, EdgeKind.MEMBER_OF):
        group = graph.node(edge.dst)
        granted = group.attr("grants_tier")
        if granted is not None:
            tiers.append(int(granted))
        admin_sources.append(group.id)
    for source in admin_sources:
        for edge in graph.edges_from(source, EdgeKind.ADMIN_OF):
            admin_tier = graph.node(edge.dst).attr("admin_tier")
            if admin_tier is not None:
                tiers.append(int(admin_tier))
    return min(tiers)


# ---------------------------------------------------------------------------
# Technique catalog and transitions
# ---------------------------------------------------------------------------

PREDICATE_KINDS = frozenset(
    {
        "has_session",
        "edge_exists",
        "tier_at_most",
        "reachable_from_session",
        "creds_on_host",
        "service_task_association",
        "attr_absent",
        "attr_equals",
    }
)

EFFECT_KINDS = frozenset({"gain_session", "gain_tier"})


@dataclass(frozen=True)
class Predicate:
    kind: str
    params: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in PREDICATE_KINDS:
            raise ValueError(f"unknown predicate kind {self.kind!r}")

    def param(self, key: str, default: str | None = None) -> str | None:
        for k, v in self.params:
            if k == key:
                return v
        return default

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_json(cls, doc: Mapping) -> "Predicate":
        params = tuple(sorted((str(k), str(v)) for k, v in (doc.get("params") or {}).items()))
        try:
            return cls(kind=doc["kind"], params=params)
        except ValueError as exc:
            raise SnapshotError(str(exc)) from None


def predicate(pred_kind: str, **params: str) -> Predicate:
    return Predicate(kind=pred_kind, params=tuple(sorted(params.items())))


@dataclass(frozen=True)
class Effect:
    kind: str
    params: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in EFFECT_KINDS:
            raise ValueError(f"unknown effect kind {self.kind!r}")

    def param(self, key: str, default: str | None = None) -> str | None:
        for k, v in self.params:
            if k == key:
                return v
        return default

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_json(cls, doc: Mapping) -> "Effect":
        params = tuple(sorted((str(k), str(v)) for k, v in (doc.get("params") or {}).items()))
        try:
            return cls(kind=doc["kind"], params=params)
        except ValueError as exc:
            raise SnapshotError(str(exc)) from None


def effect(effect_kind: str, **params: str) -> Effect:
    return Effect(kind=effect_kind, params=tuple(sorted(params.items())))


@dataclass(frozen=True)
class TechniqueSpec:
    technique_id: str
    name: str
    tactic: str
    preconditions: tuple[Predicate, ...] = ()
    effects: tuple[Effect, ...] = ()
    phrase: str = ""  # short clause used in hypothesis descriptions

    def to_json(self) -> dict:
        return {
            "technique_id": self.technique_id,
            "name": self.name,
            "tactic": self.tactic,
            "preconditions": [p.to_json() for p in self.preconditions],
            "effects": [e.to_json() for e in self.effects],
            "phrase": self.phrase,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "TechniqueSpec":
        return cls(
            technique_id=doc["technique_id"],
            name=doc["name"],
            tactic=doc["tactic"],
            preconditions=tuple(Predicate.from_json(p) for p in doc.get("preconditions", [])),
            effects=tuple(Effect.from_json(e) for e in doc.get("effects", [])),
            phrase=doc.get("phrase", ""),
        )


class TransitionTable:
    """Technique chaining weights; successors sorted by weight desc, id asc."""

    def __init__(self, entries: Mapping[str, Sequence[tuple[str, float]]]):
        self._succ: dict[str, tuple[tuple[str, float], ...]] = {}
        for tid, succs in entries.items():
            for succ_id, weight in succs:
                if succ_id == tid:
                    raise SnapshotError(f"transition table has self-loop on {tid}")
                if not 0.0 < weight <= 1.0:
                    raise SnapshotError(f"transition weight {tid}->{succ_id} must be in (0, 1]")
            self._succ[tid] = tuple(sorted(succs, key=lambda sw: (-sw[1], sw[0])))

    def known(self, technique_id: str) -> bool:
        return technique_id in self._succ

    def successors(self, technique_id: str) -> list[tuple[str, float]]:
        if technique_id not in self._succ:
            raise UnknownEntityError(f"unknown technique {technique_id!r} in transition table")
        return list(self._succ[technique_id])

    def weight(self, src: str, dst: str) -> float | None:
        for succ_id, w in self._succ.get(src, ()):
            if succ_id == dst:
                return w
        return None

    def to_json(self) -> dict:
        return {tid: [[s, w] for s, w in succs] for tid, succs in sorted(self._succ.items())}

    @classmethod
    def from_json(cls, doc: Mapping) -> "TransitionTable":
        return cls({tid: [(s, float(w)) for s, w in succs] for tid, succs in doc.items()})


def technique_successors(table: TransitionTable, technique_id: str) -> list[tuple[str, float]]:
    return table.successors(technique_id)


# ---------------------------------------------------------------------------
# Business impact and policy
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ImpactParams:
    downtime_cost: float
    user_disruption: float
    compliance_sensitivity: float

    def __post_init__(self) -> None:
        for name in ("downtime_cost", "user_disruption", "compliance_sensitivity"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")

    def to_json(self) -> dict:
        return {
            "downtime_cost": self.downtime_cost,
            "user_disruption": self.user_disruption,
            "compliance_sensitivity": self.compliance_sensitivity,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "ImpactParams":
        try:
            return cls(
                downtime_cost=float(doc["downtime_cost"]),
                user_disruption=float(doc["user_disruption"]),
                compliance_sensitivity=float(doc["compliance_sensitivity"]),
            )
        except ValueError as exc:
            raise SnapshotError(str(exc)) from None


class PolicyEffect(str, Enum):
    FORBID = "Forbid"
    REQUIRE_APPROVAL = "RequireApproval"


@dataclass(frozen=True)
class PolicyConstraint:
    """Declarative matcher over (action primitive, target entity).

    Empty selector components match anything, so the predicate is total.
    """

    policy_id: str
    effect: PolicyEffect
    primitives: frozenset[str] = frozenset()
    target_kinds: frozenset[str] = frozenset()
    target_ids: frozenset[str] = frozenset()
    target_tags: frozenset[str] = frozenset()
    description: str = ""

    def matches(self, primitive: str, target: EntityNode | None) -> bool:
        if self.primitives and primitive not in self.primitives:
            return False
        if target is None:
            return not (self.target_kinds or self.target_ids or self.target_tags)
        if self.target_kinds and target.kind.value not in self.target_kinds:
            return False
        if self.target_ids and target.id not in self.target_ids:
            return False
        if self.target_tags and not (self.target_tags & target.tags()):
            return False
        return True

    def to_json(self) -> dict:
        return {
            "id": self.policy_id,
            "effect": self.effect.value,
            "primitives": sorted(self.primitives),
            "target_kinds": sorted(self.target_kinds),
            "target_ids": sorted(self.target_ids),
            "target_tags": sorted(self.target_tags),
            "description": self.description,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "PolicyConstraint":
        return cls(
            policy_id=doc["id"],
            effect=PolicyEffect(doc["effect"]),
            primitives=frozenset(doc.get("primitives", [])),
            target_kinds=frozenset(doc.get("target_kinds", [])),
            target_ids=frozenset(doc.get("target_ids", [])),
            target_tags=frozenset(doc.get("target_tags", [])),
            description=doc.get("description", ""),
        )


# ---------------------------------------------------------------------------
# Deltas
# ---------------------------------------------------------------------------

class Provenance(str, Enum):
    EXECUTION_OUTCOME = "ExecutionOutcome"
    MONITOR_OBSERVATION = "MonitorObservation"
    MANUAL_LOAD = "ManualLoad"


@dataclass(frozen=True)
class DeltaOp:
    """One atomic mutation. ``op`` is one of add_node, remove_node,
    add_edge, remove_edge, set_attr. Removals carry the full prior record
    so every op has an exact inverse."""

    op: str
    node: EntityNode | None = None
    edge: Edge | None = None
    node_id: str | None = None
    attr_key: str | None = None
    attr_new: str | None = None
    attr_old: str | None = None

    def inverse(self) -> "DeltaOp":
        if self.op == "add_node":
            return DeltaOp(op="remove_node", node=self.node)
        if self.op == "remove_node":
            return DeltaOp(op="add_node", node=self.node)
        if self.op == "add_edge":
            return DeltaOp(op="remove_edge", edge=self.edge)
        if self.op == "remove_edge":
            return DeltaOp(op="add_edge", edge=self.edge)
        if self.op == "set_attr":
            return DeltaOp(
                op="set_attr",
                node_id=self.node_id,
                attr_key=self.attr_key,
                attr_new=self.attr_old,
                attr_old=self.attr_new,
            )
        raise DeltaError(f"unknown delta op {self.op!r}")

    def touches(self) -> set[str]:
        ids: set[str] = set()
        if self.node is not None:
            ids.add(self.node.id)
        if self.edge is not None:
            ids.update((self.edge.src, self.edge.dst))
        if self.node_id is not None:
            ids.add(self.node_id)
        return ids

    def to_json(self) -> dict:
        doc: dict = {"op": self.op}
        if self.node is not None:
            doc["node"] = self.node.to_json()
        if self.edge is not None:
            doc["edge"] = self.edge.to_json()
        if self.node_id is not None:
            doc["node_id"] = self.node_id
        if self.attr_key is not None:
            doc["attr_key"] = self.attr_key
            doc["attr_new"] = self.attr_new
            doc["attr_old"] = self.attr_old
        return doc

    @classmethod
    def from_json(cls, doc: Mapping) -> "DeltaOp":
        return cls(
            op=doc["op"],
            node=EntityNode.from_json(doc["node"]) if "node" in doc else None,
            edge=Edge.from_json(doc["edge"]) if "edge" in doc else None,
            node_id=doc.get("node_id"),
            attr_key=doc.get("attr_key"),
            attr_new=doc.get("attr_new"),
            attr_old=doc.get("attr_old"),
        )


@dataclass(frozen=True)
class KnowledgeDelta:
    delta_id: str
    ops: tuple[DeltaOp, ...]
    provenance: Provenance
    timestamp: int = 0

    def is_empty(self) -> bool:
        return not self.ops

    def inverse(self, delta_id: str | None = None) -> "KnowledgeDelta":
        return KnowledgeDelta(
            delta_id=delta_id or f"{self.delta_id}~inv",
            ops=tuple(op.inverse() for op in reversed(self.ops)),
            provenance=self.provenance,
            timestamp=self.timestamp,
        )

    def touches(self) -> set[str]:
        out: set[str] = set()
        for op in self.ops:
            out |= op.touches()
        return out

    def to_json(self) -> dict:
        return {
            "delta_id": self.delta_id,
            "provenance": self.provenance.value,
            "timestamp": self.timestamp,
            "ops": [op.to_json() for op in self.ops],
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "KnowledgeDelta":
        return cls(
            delta_id=doc["delta_id"],
            ops=tuple(DeltaOp.from_json(o) for o in doc["ops"]),
            provenance=Provenance(doc["provenance"]),
            timestamp=int(doc.get("timestamp", 0)),
        )


def apply_ops(graph: EnterpriseGraph, ops: Sequence[DeltaOp], version: int | None = None) -> EnterpriseGraph:
    """Apply ops in order to produce a new graph; raises DeltaError unchanged."""
    current = graph
    for op in ops:
        if op.op == "add_node":
            assert op.node is not None
            current = current.with_changes(add_nodes=[op.node], version=current.version)
        elif op.op == "remove_node":
            assert op.node is not None
            existing = current.nodes.get(op.node.id)
            if existing is None:
                raise DeltaError(f"cannot remove absent node {op.node.id!r}")
            if existing != op.node:
                raise DeltaError(f"node {op.node.id!r} differs from recorded state; refusing removal")
            current = current.with_changes(remove_node_ids=[op.node.id], version=current.version)
        elif op.op == "add_edge":
            assert op.edge is not None
            current = current.with_changes(add_edges=[op.edge], version=current.version)
        elif op.op == "remove_edge":
            assert op.edge is not None
            current = current.with_changes(remove_edges=[op.edge], version=current.version)
        elif op.op == "set_attr":
            assert op.node_id is not None and op.attr_key is not None
            node = current.nodes.get(op.node_id)
            if node is None:
                raise DeltaError(f"cannot set attribute on absent node {op.node_id!r}")
            if node.attr(op.attr_key) != op.attr_old:
                raise DeltaError(
                    f"attribute {op.attr_key!r} of {op.node_id!r} is {node.attr(op.attr_key)!r}, "
                    f"delta expected {op.attr_old!r}"
                )
            current = current.with_changes(
                replace_nodes=[node.with_attr(op.attr_key, op.attr_new)], version=current.version
            )
        else:
            raise DeltaError(f"unknown delta op {op.op!r}")
    target_version = graph.version + 1 if version is None else version
    return EnterpriseGraph(current.nodes, current.all_edges(), target_version, current.unmodeled_facts)


# ---------------------------------------------------------------------------
# Store
# ---------------------------------------------------------------------------

class KnowledgeStore:
    """Single-writer store publishing immutable graph versions."""

    def __init__(
        self,
        graph: EnterpriseGraph,
        techniques: Mapping[str, TechniqueSpec] | None = None,
        transitions: TransitionTable | None = None,
        impact_params: Mapping[str, ImpactParams] | None = None,
        policies: Sequence[PolicyConstraint] = (),
        delta_log_path: str | Path | None = None,
    ):
        self._graph = graph
        self.techniques: dict[str, TechniqueSpec] = dict(techniques or {})
        self.transitions = transitions or TransitionTable({})
        self.impact_params: dict[str, ImpactParams] = dict(impact_params or {})
        self.policies: list[PolicyConstraint] = list(policies)
        self._lock = threading.Lock()
        self._delta_counter = 0
        self._history: list[tuple[KnowledgeDelta, KnowledgeDelta]] = []
        self.delta_log_path = Path(delta_log_path) if delta_log_path else None

    @property
    def graph(self) -> EnterpriseGraph:
        return self._graph

    @property
    def version(self) -> int:
        return self._graph.version

    def technique(self, technique_id: str) -> TechniqueSpec:
        spec = self.techniques.get(technique_id)
        if spec is None:
            raise UnknownEntityError(f"unknown technique {technique_id!r}")
        return spec

    def next_delta_id(self) -> str:
        with self._lock:
            self._delta_counter += 1
            return f"D-{self._delta_counter:06d}"

    def apply_delta(self, delta: KnowledgeDelta) -> int:
        """All-or-nothing application; returns the new version."""
        with self._lock:
            if delta.is_empty():
                return self._graph.version  # no-op short-circuit
            new_graph = apply_ops(self._graph, delta.ops)
            inverse = delta.inverse()
            self._graph = new_graph
            self._history.append((delta, inverse))
            if self.delta_log_path is not None:
                with open(self.delta_log_path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(delta.to_json(), sort_keys=True) + "\n")
            return new_graph.version

    def inverse_of(self, delta_id: str) -> KnowledgeDelta | None:
        for applied, inverse in self._history:
            if applied.delta_id == delta_id:
                return inverse
        return None

    def to_json(self) -> dict:
        return {
            "schema": SNAPSHOT_SCHEMA,
            "version": self._graph.version,
            "unmodeled_facts": sorted(self._graph.unmodeled_facts),
            "nodes": [n.to_json() for n in sorted(self._graph.nodes.values(), key=lambda n: n.id)],
            "edges": [e.to_json() for e in self._graph.all_edges()],
            "techniques": [t.to_json() for t in sorted(self.techniques.values(), key=lambda t: t.technique_id)],
            "transitions": self.transitions.to_json(),
            "impact_params": {k: v.to_json() for k, v in sorted(self.impact_params.items())},
            "policies": [p.to_json() for p in self.policies],
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(canonical_json(self.to_json()), encoding="utf-8")


def canonical_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def load_snapshot(path: str | Path, delta_log_path: str | Path | None = None) -> KnowledgeStore:
    """Load a snapshot file, enforcing every type invariant."""
    p = Path(path)
    if not p.exists():
        raise SnapshotError(f"snapshot file not found: {p}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SnapshotError(f"snapshot {p} is not valid JSON: {exc}") from exc
    return store_from_json(doc, delta_log_path=delta_log_path)


def store_from_json(doc: Mapping, delta_log_path: str | Path | None = None) -> KnowledgeStore:
    nodes: dict[str, EntityNode] = {}
    for raw in doc.get("nodes", []):
        try:
            node = EntityNode.from_json(raw)
        except (KeyError, ValueError) as exc:
            raise SnapshotError(f"bad node record {raw!r}: {exc}") from None
        if node.id in nodes:
            raise SnapshotError(f"duplicate node id {node.id!r}")
        nodes[node.id] = node
    edges = []
    for raw in doc.get("edges", []):
        try:
            edges.append(Edge.from_json(raw))
        except (KeyError, ValueError) as exc:
            raise SnapshotError(f"bad edge record {raw!r}: {exc}") from None
    graph = EnterpriseGraph(
        nodes,
        edges,
        version=int(doc.get("version", 0)),
        unmodeled_facts=doc.get("unmodeled_facts", ()),
    )
    techniques: dict[str, TechniqueSpec] = {}
    for raw in doc.get("techniques", []):
        spec = TechniqueSpec.from_json(raw)
        if spec.technique_id in techniques:
            raise SnapshotError(f"duplicate technique id {spec.technique_id!r}")
        techniques[spec.technique_id] = spec
    transitions = TransitionTable.from_json(doc.get("transitions", {}))
    for tid, succs in doc.get("transitions", {}).items():
        if tid not in techniques:
            raise SnapshotError(f"transition table references unknown technique {tid!r}")
        for succ_id, _ in succs:
            if succ_id not in techniques:
                raise SnapshotError(f"transition table references unknown technique {succ_id!r}")
    impact = {}
    for entity_id, raw in doc.get("impact_params", {}).items():
        impact[entity_id] = ImpactParams.from_json(raw)
    policies = [PolicyConstraint.from_json(raw) for raw in doc.get("policies", [])]
    return KnowledgeStore(
        graph,
        techniques=techniques,
        transitions=transitions,
        impact_params=impact,
        policies=policies,
        delta_log_path=delta_log_path,
    )
