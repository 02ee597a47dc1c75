from __future__ import annotations

import json
import random
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agentsoc.errors import DeltaError, SnapshotError, UnknownEntityError
from agentsoc.fixture import build_store
from agentsoc.knowledge import (
    DeltaOp,
    Edge,
    EdgeKind,
    EnterpriseGraph,
    EntityNode,
    KnowledgeDelta,
    NodeKind,
    Provenance,
    TransitionTable,
    load_snapshot,
    make_edge,
    privilege_tier,
    reachable_path,
    store_from_json,
    technique_successors,
)
from oracles import all_simple_paths, oracle_shortest_path, random_host_graph


def host(hid, **attrs):
    return EntityNode(id=hid, kind=NodeKind.HOST, attributes=tuple(sorted(attrs.items())))


def user(uid, tier=1, **attrs):
    return EntityNode(id=uid, kind=NodeKind.USER, privilege_tier=tier, attributes=tuple(sorted(attrs.items())))


def group(gid, **attrs):
    return EntityNode(id=gid, kind=NodeKind.GROUP, attributes=tuple(sorted(attrs.items())))


# ---------------------------------------------------------------------------
# Snapshot load/save
# ---------------------------------------------------------------------------

def test_poc_fixture_has_fifty_nodes(poc_store):
    assert len(poc_store.graph.nodes) == 50


def test_empty_snapshot_roundtrip(tmp_path):
    empty = EnterpriseGraph({}, [], version=0)
    from agentsoc.knowledge import KnowledgeStore

    store = KnowledgeStore(empty)
    path = tmp_path / "empty.json"
    store.save(path)
    loaded = load_snapshot(path)
    assert len(loaded.graph.nodes) == 0


def test_snapshot_roundtrip_is_byte_identical(tmp_path, poc_store):
    first = tmp_path / "one.json"
    second = tmp_path / "two.json"
    poc_store.save(first)
    load_snapshot(first).save(second)
    assert first.read_bytes() == second.read_bytes()


def test_missing_snapshot_file(tmp_path):
    with pytest.raises(SnapshotError, match="not found"):
        load_snapshot(tmp_path / "nope.json")


def test_dangling_edge_names_offender():
    doc = {
        "version": 1,
        "nodes": [{"id": "a", "kind": "Host"}],
        "edges": [{"from": "a", "to": "ghost", "kind": "Reachable", "attributes": {"protocol": "SMB"}}],
    }
    with pytest.raises(SnapshotError, match="ghost"):
        store_from_json(doc)


def test_duplicate_node_id_rejected():
    doc = {"version": 1, "nodes": [{"id": "a", "kind": "Host"}, {"id": "a", "kind": "Host"}], "edges": []}
    with pytest.raises(SnapshotError, match="duplicate"):
        store_from_json(doc)


def test_edge_endpoint_kind_rules():
    nodes = {"u": user("u"), "h": host("h"), "g": group("g")}
    with pytest.raises(SnapshotError, match="endpoint"):
        EnterpriseGraph(nodes, [make_edge("u", "h", EdgeKind.REACHABLE)])
    with pytest.raises(SnapshotError, match="endpoint"):
        EnterpriseGraph(nodes, [make_edge("g", "u", EdgeKind.MEMBER_OF)])
    # AdminOf from group to host is legal.
    EnterpriseGraph(nodes, [make_edge("g", "h", EdgeKind.ADMIN_OF)])


# ---------------------------------------------------------------------------
# reachable_path
# ---------------------------------------------------------------------------

def test_poc_smb_path(poc_store):
    assert reachable_path(poc_store.graph, "ws-fin-27", "srv-fin-03", protocol="SMB") == [
        "ws-fin-27",
        "srv-fin-03",
    ]


def test_path_src_equals_dst(poc_store):
    assert reachable_path(poc_store.graph, "ws-fin-27", "ws-fin-27") == ["ws-fin-27"]


def test_disconnected_pair_returns_none():
    nodes = {"a": host("a"), "b": host("b")}
    graph = EnterpriseGraph(nodes, [])
    assert reachable_path(graph, "a", "b") is None


def test_unknown_node_is_lookup_error(poc_store):
    with pytest.raises(UnknownEntityError):
        reachable_path(poc_store.graph, "ws-fin-27", "nonexistent-host")


def test_non_host_endpoint_rejected(poc_store):
    with pytest.raises(UnknownEntityError):
        reachable_path(poc_store.graph, "user123", "srv-fin-03")


def test_lexicographic_tie_break():
    nodes = {h: host(h) for h in ("s", "a", "b", "t")}
    edges = [
        make_edge("s", "a", EdgeKind.REACHABLE, protocol="SMB"),
        make_edge("s", "b", EdgeKind.REACHABLE, protocol="SMB"),
        make_edge("a", "t", EdgeKind.REACHABLE, protocol="SMB"),
        make_edge("b", "t", EdgeKind.REACHABLE, protocol="SMB"),
    ]
    graph = EnterpriseGraph(nodes, edges)
    assert reachable_path(graph, "s", "t") == ["s", "a", "t"]


@pytest.mark.parametrize("seed", range(40))
def test_reachable_path_matches_bruteforce(seed):
    rng = random.Random(seed)
    graph = random_host_graph(rng, max_nodes=12)
    ids = sorted(graph.nodes)
    for _ in range(8):
        src, dst = rng.choice(ids), rng.choice(ids)
        proto = rng.choice([None, "SMB", "RDP"])
        assert reachable_path(graph, src, dst, protocol=proto) == oracle_shortest_path(
            graph, src, dst, protocol=proto
        )


# ---------------------------------------------------------------------------
# privilege_tier
# ---------------------------------------------------------------------------

def test_poc_user_tier(poc_store):
    assert privilege_tier(poc_store.graph, "user123") == 2


def test_admin_of_grants_asset_tier():
    nodes = {"u": user("u", tier=3), "h": host("h", admin_tier="1")}
    graph = EnterpriseGraph(nodes, [make_edge("u", "h", EdgeKind.ADMIN_OF)])
    # Exhaustive expansion: own tier 3, AdminOf grant 1 -> effective 1.
    assert privilege_tier(graph, "u") == 1


def test_group_grants_tier_via_membership():
    nodes = {"u": user("u", tier=3), "g": group("g", grants_tier="1")}
    graph = EnterpriseGraph(nodes, [make_edge("u", "g", EdgeKind.MEMBER_OF)])
    assert privilege_tier(graph, "u") == 1


def test_group_admin_of_grants_tier():
    nodes = {"u": user("u", tier=4), "g": group("g"), "h": host("h", admin_tier="2")}
    edges = [make_edge("u", "g", EdgeKind.MEMBER_OF), make_edge("g", "h", EdgeKind.ADMIN_OF)]
    graph = EnterpriseGraph(nodes, edges)
    assert privilege_tier(graph, "u") == 2


def test_no_memberships_returns_own_tier():
    graph = EnterpriseGraph({"u": user("u", tier=3)}, [])
    assert privilege_tier(graph, "u") == 3


def test_unknown_user_is_lookup_error(poc_store):
    with pytest.raises(UnknownEntityError):
        privilege_tier(poc_store.graph, "nobody")


# ---------------------------------------------------------------------------
# Technique transitions
# ---------------------------------------------------------------------------

def test_t1078_successors_include_t1021(poc_store):
    succ = technique_successors(poc_store.transitions, "T1078")
    assert ("T1021", 0.8) in succ
    assert succ == sorted(succ, key=lambda sw: (-sw[1], sw[0]))


def test_terminal_technique_empty():
    table = TransitionTable({"T1": [("T2", 0.5)], "T2": []})
    assert technique_successors(table, "T2") == []


def test_unknown_technique_errors(poc_store):
    with pytest.raises(UnknownEntityError):
        technique_successors(poc_store.transitions, "T9999")


def test_transition_invariants():
    with pytest.raises(SnapshotError, match="self-loop"):
        TransitionTable({"T1": [("T1", 0.5)]})
    with pytest.raises(SnapshotError, match="weight"):
        TransitionTable({"T1": [("T2", 1.5)]})


# ---------------------------------------------------------------------------
# Deltas
# ---------------------------------------------------------------------------

def test_apply_then_inverse_restores_graph(fresh_store):
    before = fresh_store.to_json()
    v0 = fresh_store.version
    edge = make_edge("ws-fin-01", "srv-fin-02", EdgeKind.REACHABLE, protocol="SMB")
    delta = KnowledgeDelta("D-test", (DeltaOp(op="add_edge", edge=edge),), Provenance.MANUAL_LOAD)
    fresh_store.apply_delta(delta)
    fresh_store.apply_delta(delta.inverse())
    after = fresh_store.to_json()
    assert after["version"] == v0 + 2
    before.pop("version")
    after.pop("version")
    assert json.dumps(before, sort_keys=True) == json.dumps(after, sort_keys=True)


def test_delta_removing_absent_node_rejected(fresh_store):
    v0 = fresh_store.version
    delta = KnowledgeDelta(
        "D-bad", (DeltaOp(op="remove_node", node=host("ghost")),), Provenance.MANUAL_LOAD
    )
    with pytest.raises(DeltaError):
        fresh_store.apply_delta(delta)
    assert fresh_store.version == v0


def test_quarantine_delta_cuts_reachability(fresh_store):
    graph = fresh_store.graph
    assert reachable_path(graph, "ws-fin-27", "srv-fin-03") is not None
    ops = tuple(
        DeltaOp(op="remove_edge", edge=e)
        for e in graph.edges_touching("ws-fin-27", kinds=[EdgeKind.REACHABLE])
    )
    fresh_store.apply_delta(KnowledgeDelta("D-q", ops, Provenance.EXECUTION_OUTCOME))
    mutated = fresh_store.graph
    assert reachable_path(mutated, "ws-fin-27", "srv-fin-03") is None
    # Cross-checked by exhaustive enumeration.
    assert all_simple_paths(mutated, "ws-fin-27", "srv-fin-03") == []


def test_partial_failure_leaves_store_untouched(fresh_store):
    before = json.dumps(fresh_store.to_json(), sort_keys=True)
    good = DeltaOp(op="add_edge", edge=make_edge("ws-fin-01", "srv-fin-02", EdgeKind.REACHABLE, protocol="X"))
    bad = DeltaOp(op="remove_node", node=host("ghost"))
    with pytest.raises(DeltaError):
        fresh_store.apply_delta(KnowledgeDelta("D-mix", (good, bad), Provenance.MANUAL_LOAD))
    assert json.dumps(fresh_store.to_json(), sort_keys=True) == before


def _referential_audit(graph: EnterpriseGraph) -> None:
    for edge in graph.all_edges():
        assert edge.src in graph.nodes and edge.dst in graph.nodes


_small_graph = st.builds(
    lambda n, seed: (n, seed),
    st.integers(min_value=2, max_value=6),
    st.integers(min_value=0, max_value=10**6),
)


@given(_small_graph)
@settings(max_examples=120, deadline=None)
def test_delta_inversion_property(params):
    n, seed = params
    rng = random.Random(seed)
    graph = random_host_graph(rng, max_nodes=n)
    from agentsoc.knowledge import KnowledgeStore

    store = KnowledgeStore(graph)
    snapshot_before = json.dumps(store.to_json(), sort_keys=True)

    ops: list[DeltaOp] = []
    edges = graph.all_edges()
    if edges and rng.random() < 0.7:
        ops.append(DeltaOp(op="remove_edge", edge=rng.choice(edges)))
    new_id = f"x{rng.randint(100, 999)}"
    ops.append(DeltaOp(op="add_node", node=host(new_id)))
    node_id = rng.choice(sorted(graph.nodes))
    ops.append(
        DeltaOp(op="set_attr", node_id=node_id, attr_key="note", attr_new="y", attr_old=None)
    )
    delta = KnowledgeDelta("D-prop", tuple(ops), Provenance.MANUAL_LOAD)
    store.apply_delta(delta)
    _referential_audit(store.graph)
    store.apply_delta(delta.inverse())
    _referential_audit(store.graph)
    after = store.to_json()
    after["version"] = 1
    loaded_before = json.loads(snapshot_before)
    loaded_before["version"] = 1
    assert json.dumps(after, sort_keys=True) == json.dumps(loaded_before, sort_keys=True)


def test_concurrent_readers_see_consistent_versions(fresh_store):
    """Readers snapshotting under writer churn never see partial mutations."""
    stop = threading.Event()
    failures: list[str] = []

    def reader() -> None:
        while not stop.is_set():
            graph = fresh_store.graph
            try:
                _referential_audit(graph)
            except AssertionError:
                failures.append(f"partial mutation at version {graph.version}")
                return

    threads = [threading.Thread(target=reader) for _ in range(4)]
    for t in threads:
        t.start()
    edge = make_edge("ws-fin-01", "srv-fin-02", EdgeKind.REACHABLE, protocol="TMP")
    for _ in range(50):
        fresh_store.apply_delta(
            KnowledgeDelta("D-w", (DeltaOp(op="add_edge", edge=edge),), Provenance.MANUAL_LOAD)
        )
        fresh_store.apply_delta(
            KnowledgeDelta("D-w2", (DeltaOp(op="remove_edge", edge=edge),), Provenance.MANUAL_LOAD)
        )
    stop.set()
    for t in threads:
        t.join()
    assert failures == []


def test_delta_log_appends_json_lines(tmp_path, fixture_dir):
    log = tmp_path / "deltas.jsonl"
    store = load_snapshot(fixture_dir / "snapshot.json", delta_log_path=log)
    edge = make_edge("ws-fin-01", "srv-fin-02", EdgeKind.REACHABLE, protocol="TMP")
    store.apply_delta(KnowledgeDelta("D-1", (DeltaOp(op="add_edge", edge=edge),), Provenance.MANUAL_LOAD))
    lines = log.read_text().strip().splitlines()
    assert len(lines) == 1
    assert json.loads(lines[0])["delta_id"] == "D-1"
