"""Independent reference implementations used to cross-check the engine.

Everything here is deliberately naive: full re-scans, exhaustive
enumeration, no incremental state. These stay structurally distinct from
the production code paths they verify.
"""

from __future__ import annotations

import random
from typing import Sequence

from agentsoc.ingest import AlertKind, AuthEvent, Baseline, DetectionConfig, RawAlert, UNKNOWN
from agentsoc.knowledge import (
    Edge,
    EdgeKind,
    EnterpriseGraph,
    EntityNode,
    NodeKind,
    make_edge,
)
from agentsoc.sse import PreconditionStatus

_RULE_ORDER = (
    AlertKind.CROSS_DOMAIN_ACCESS,
    AlertKind.REPEATED_FAILURE,
    AlertKind.GEO_CHANGE,
    AlertKind.SHORT_INTERVAL_LATERAL_MOVE,
    AlertKind.FIRST_TIME_HOST_ACCESS,
    AlertKind.CROSS_TIER_ACCESS,
)


def naive_detect(events: Sequence[AuthEvent], baseline: Baseline, config: DetectionConfig) -> list[RawAlert]:
    """Literal O(n^2) re-scan implementation of the anomaly rules."""
    config.validate()
    ordered = sorted(events, key=lambda e: e.time)
    alerts: list[RawAlert] = []

    def emit(kind: AlertKind, triggering: list[AuthEvent], at: int) -> None:
        alerts.append(
            RawAlert(
                alert_id=f"RA-{len(alerts) + 1:06d}",
                kind=kind,
                triggering_events=tuple(triggering),
                severity=config.severity[kind],
                detected_at=at,
            )
        )

    def synthetic_failures(user: str) -> list[AuthEvent]:
        return [
            AuthEvent(
                time=t,
                source_user=user,
                dest_user=user,
                source_host=UNKNOWN,
                dest_host=UNKNOWN,
                auth_type=UNKNOWN,
                logon_type=UNKNOWN,
                orientation=UNKNOWN,
                outcome="Failure",
            )
            for t in baseline.failure_times.get(user, [])
        ]

    def failures_in_window(user: str, upto_index: int, at: int) -> list[AuthEvent]:
        pool = synthetic_failures(user) + [
            e
            for e in ordered[: upto_index + 1]
            if e.source_user == user and e.outcome == "Failure"
        ]
        return [e for e in pool if e.time > at - config.failure_window_s]

    def prior_failure_index(user: str, index: int) -> int | None:
        for j in range(index - 1, -1, -1):
            if ordered[j].source_user == user and ordered[j].outcome == "Failure":
                return j
        return None

    def successes_in_window(user: str, upto_index: int, at: int) -> list[AuthEvent]:
        return [
            e
            for e in ordered[: upto_index + 1]
            if e.source_user == user
            and e.outcome == "Success"
            and e.dest_host not in ("", UNKNOWN)
            and e.time > at - config.lateral_window_s
        ]

    def prior_success_index(user: str, index: int) -> int | None:
        for j in range(index - 1, -1, -1):
            e = ordered[j]
            if e.source_user == user and e.outcome == "Success" and e.dest_host not in ("", UNKNOWN):
                return j
        return None

    cross_tier_seen: set[tuple[str, str]] = set()

    for i, event in enumerate(ordered):
        user = event.source_user
        for kind in _RULE_ORDER:
            if kind is AlertKind.CROSS_DOMAIN_ACCESS:
                s, d = event.source_domain, event.dest_domain
                if s and d and s != d:
                    emit(kind, [event], event.time)

            elif kind is AlertKind.REPEATED_FAILURE:
                if event.outcome != "Failure":
                    continue
                window = failures_in_window(user, i, event.time)
                above = len(window) >= config.failure_count
                prev = prior_failure_index(user, i)
                prev_above = False
                if prev is not None:
                    prev_window = failures_in_window(user, prev, ordered[prev].time)
                    prev_above = len(prev_window) >= config.failure_count
                if above and not prev_above:
                    emit(kind, window, event.time)

            elif kind is AlertKind.GEO_CHANGE:
                if event.location is None:
                    continue
                prior = None
                for j in range(i - 1, -1, -1):
                    if ordered[j].source_user == user and ordered[j].location is not None:
                        prior = ordered[j]
                        break
                if prior is not None and prior.location != event.location:
                    emit(kind, [prior, event], event.time)

            elif kind is AlertKind.SHORT_INTERVAL_LATERAL_MOVE:
                if event.outcome != "Success" or event.dest_host in ("", UNKNOWN):
                    continue
                window = successes_in_window(user, i, event.time)
                above = len({e.dest_host for e in window}) >= config.lateral_hosts
                prev = prior_success_index(user, i)
                prev_above = False
                if prev is not None:
                    prev_window = successes_in_window(user, prev, ordered[prev].time)
                    prev_above = len({e.dest_host for e in prev_window}) >= config.lateral_hosts
                if above and not prev_above:
                    emit(kind, window, event.time)

            elif kind is AlertKind.FIRST_TIME_HOST_ACCESS:
                if event.outcome != "Success" or event.dest_host in ("", UNKNOWN):
                    continue
                seen = set(baseline.seen(user))
                for e in ordered[:i]:
                    if (
                        e.source_user == user
                        and e.outcome == "Success"
                        and e.dest_host not in ("", UNKNOWN)
                    ):
                        seen.add(e.dest_host)
                if event.dest_host not in seen:
                    emit(kind, [event], event.time)

            elif kind is AlertKind.CROSS_TIER_ACCESS:
                if not config.host_criticality or not config.user_tier:
                    continue
                if event.outcome != "Success" or event.dest_host in ("", UNKNOWN):
                    continue
                tier = config.user_tier.get(user)
                crit = config.host_criticality.get(event.dest_host)
                key = (user, event.dest_host)
                if (
                    tier is not None
                    and crit is not None
                    and tier >= config.cross_tier_user_tier
                    and crit >= config.cross_tier_criticality
                    and key not in cross_tier_seen
                ):
                    emit(kind, [event], event.time)
                    cross_tier_seen.add(key)

    return alerts


# ---------------------------------------------------------------------------
# Graph oracles
# ---------------------------------------------------------------------------

def all_simple_paths(
    graph: EnterpriseGraph,
    src: str,
    dst: str,
    kinds: Sequence[EdgeKind] = (EdgeKind.REACHABLE,),
    protocol: str | None = None,
) -> list[list[str]]:
    """Exhaustive DFS enumeration of simple paths."""
    paths: list[list[str]] = []

    def step(current: str, visited: list[str]) -> None:
        if current == dst:
            paths.append(list(visited))
            return
        for kind in kinds:
            for edge in graph.edges_from(current, kind):
                if protocol is not None and edge.protocol != protocol:
                    continue
                if edge.dst in visited:
                    continue
                visited.append(edge.dst)
                step(edge.dst, visited)
                visited.pop()

    if not graph.has_node(src) or not graph.has_node(dst):
        return []
    step(src, [src])
    return paths


def oracle_shortest_path(
    graph: EnterpriseGraph,
    src: str,
    dst: str,
    kinds: Sequence[EdgeKind] = (EdgeKind.REACHABLE,),
    protocol: str | None = None,
) -> list[str] | None:
    paths = all_simple_paths(graph, src, dst, kinds, protocol)
    if not paths:
        return None
    return min(paths, key=lambda p: (len(p), tuple(p)))


def oracle_attack_path(
    graph: EnterpriseGraph,
    sessions: Sequence[str],
    target: str,
    kinds: Sequence[EdgeKind] = (EdgeKind.REACHABLE,),
    protocol: str | None = None,
) -> list[str] | None:
    best = None
    for start in sorted(set(sessions)):
        path = oracle_shortest_path(graph, start, target, kinds, protocol)
        if path is None:
            continue
        key = (len(path), tuple(path))
        if best is None or key < best:
            best = key
    return list(best[1]) if best else None


def random_host_graph(rng: random.Random, max_nodes: int = 12) -> EnterpriseGraph:
    """Random Host-only graph with Reachable edges over a small protocol set."""
    n = rng.randint(2, max_nodes)
    nodes = {f"h{i:02d}": EntityNode(id=f"h{i:02d}", kind=NodeKind.HOST) for i in range(n)}
    ids = sorted(nodes)
    edges: list[Edge] = []
    seen: set[tuple[str, str, str]] = set()
    edge_count = rng.randint(0, n * 2)
    for _ in range(edge_count):
        a, b = rng.choice(ids), rng.choice(ids)
        proto = rng.choice(["SMB", "RDP", "SSH"])
        if a == b or (a, b, proto) in seen:
            continue
        seen.add((a, b, proto))
        edges.append(make_edge(a, b, EdgeKind.REACHABLE, protocol=proto))
    return EnterpriseGraph(nodes, edges, version=1)


# ---------------------------------------------------------------------------
# Clustering and ranking oracles
# ---------------------------------------------------------------------------

def naive_cluster_partition(alerts, bucket_s: int) -> dict[tuple, set[str]]:
    """Pairwise O(n^2) grouping by shared cluster key."""
    groups: dict[tuple, set[str]] = {}
    for a in alerts:
        key_a = (a.principal, a.source_host, a.dest_host or "", a.timestamp // bucket_s)
        groups.setdefault(key_a, set())
        for b in alerts:
            key_b = (b.principal, b.source_host, b.dest_host or "", b.timestamp // bucket_s)
            if key_a == key_b:
                groups[key_a].add(b.alert_id)
    return groups


def naive_rank(candidates, weights) -> list[str]:
    """Insertion sort with the declared comparator; returns action ids."""

    def score(c) -> float:
        return weights.alpha * c.containment - weights.beta * c.business_impact - weights.gamma * c.execution_cost

    def before(a, b) -> bool:
        sa, sb = score(a), score(b)
        if sa != sb:
            return sa > sb
        if a.business_impact != b.business_impact:
            return a.business_impact < b.business_impact
        if a.execution_cost != b.execution_cost:
            return a.execution_cost < b.execution_cost
        return a.action_id < b.action_id

    ordered: list = []
    for c in candidates:
        placed = False
        for i, existing in enumerate(ordered):
            if before(c, existing):
                ordered.insert(i, c)
                placed = True
                break
        if not placed:
            ordered.append(c)
    return [c.action_id for c in ordered]


# ---------------------------------------------------------------------------
# Chain validation oracle
# ---------------------------------------------------------------------------

def oracle_validate(hypothesis, incident, graph, catalog) -> tuple[str, list[str], str]:
    """Naive reimplementation of chain simulation.

    Returns (status, dependency notes, reason). Predicates are evaluated by
    full scans and reachability by exhaustive path enumeration.
    """
    actor = incident.user.id
    source = incident.source_host.id
    target = incident.target_host.id if incident.target_host else None
    tier = incident.user.privilege_tier if incident.user.privilege_tier is not None else 99
    sessions = {source}

    def resolve(token):
        return {"$actor": actor, "$source": source, "$target": target}.get(token, token)

    def node_attr(node_id, key):
        node = graph.nodes.get(node_id)
        return None if node is None else node.attr(key)

    def evaluate(pred) -> PreconditionStatus:
        if pred.kind in graph.unmodeled_facts:
            return PreconditionStatus.UNKNOWN
        if pred.kind == "has_session":
            return _b(resolve(pred.param("host")) in sessions)
        if pred.kind == "edge_exists":
            src, dst = resolve(pred.param("src")), resolve(pred.param("dst"))
            want_kind, want_proto = pred.param("kind"), pred.param("protocol")
            for e in graph.all_edges():
                if (
                    e.src == src
                    and e.dst == dst
                    and e.kind.value == want_kind
                    and (want_proto is None or e.protocol == want_proto)
                ):
                    return PreconditionStatus.SATISFIED
            return PreconditionStatus.UNSATISFIED
        if pred.kind == "tier_at_most":
            return _b(tier <= int(pred.param("tier", "1")))
        if pred.kind == "reachable_from_session":
            tgt = resolve(pred.param("target"))
            if tgt is None or not graph.has_node(tgt):
                return PreconditionStatus.UNSATISFIED
            for start in sessions:
                if graph.has_node(start) and all_simple_paths(
                    graph, start, tgt, (EdgeKind.REACHABLE,), pred.param("protocol")
                ):
                    return PreconditionStatus.SATISFIED
            return PreconditionStatus.UNSATISFIED
        if pred.kind == "creds_on_host":
            host = resolve(pred.param("host"))
            if host is None or not graph.has_node(host):
                return PreconditionStatus.UNSATISFIED
            tiers = (node_attr(host, "cached_cred_tiers") or "").split(",")
            return _b(pred.param("tier", "1") in [t.strip() for t in tiers])
        if pred.kind == "service_task_association":
            user = resolve(pred.param("user")) or actor
            if not graph.has_node(user):
                return PreconditionStatus.UNSATISFIED
            return _b(bool((node_attr(user, "service_tasks") or "").strip()))
        if pred.kind == "attr_absent":
            nid = resolve(pred.param("node"))
            if not graph.has_node(nid):
                return PreconditionStatus.UNSATISFIED
            return _b(node_attr(nid, pred.param("attr")) is None)
        if pred.kind == "attr_equals":
            nid = resolve(pred.param("node"))
            if not graph.has_node(nid):
                return PreconditionStatus.UNSATISFIED
            return _b(node_attr(nid, pred.param("attr")) == pred.param("value"))
        raise AssertionError(f"oracle cannot evaluate {pred.kind}")

    notes: list[str] = []
    for tid in hypothesis.technique_chain:
        spec = catalog[tid]
        unknowns = []
        for pred in spec.preconditions:
            status = evaluate(pred)
            if status is PreconditionStatus.UNSATISFIED:
                return "Infeasible", notes, f"{tid}:{pred.kind}"
            if status is PreconditionStatus.UNKNOWN:
                unknowns.append(pred)
        notes.extend(p.kind for p in unknowns)
        for eff in spec.effects:
            if eff.kind == "gain_session":
                host = resolve(eff.param("host"))
                if host is not None and graph.has_node(host):
                    sessions.add(host)
            elif eff.kind == "gain_tier":
                tier = min(tier, int(eff.param("tier", "1")))
    if notes:
        return "ConditionallyFeasible", notes, ""
    return "Feasible", notes, ""


def _b(truth: bool) -> PreconditionStatus:
    return PreconditionStatus.SATISFIED if truth else PreconditionStatus.UNSATISFIED
