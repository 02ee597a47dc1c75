from __future__ import annotations

import random
from dataclasses import replace

import pytest

from agentsoc.errors import UnknownEntityError, ValidationError
from agentsoc.knowledge import (
    EdgeKind,
    EnterpriseGraph,
    EntityNode,
    NodeKind,
    TechniqueSpec,
    effect,
    make_edge,
    predicate,
)
from agentsoc.nce import Hypothesis
from agentsoc.perception import EntityContext, IncidentObject
from agentsoc.sse import (
    ActorContext,
    FeasibilityStatus,
    FeasibilityVerdict,
    PreconditionStatus,
    Witness,
    actor_context_for,
    check_precondition,
    find_attack_path,
    validate_hypothesis,
)
from oracles import oracle_attack_path, oracle_validate, random_host_graph


def hypothesis(chain, hid="H1", kind="Malicious"):
    return Hypothesis(
        hypothesis_id=hid,
        description="test",
        technique_chain=tuple(chain),
        confidence=0.5,
        evidence=(),
        missing_context=(),
        kind=kind,
    )


def incident_for(user_id="user123", source="ws-fin-27", target="srv-fin-03", tier=2):
    return IncidentObject(
        incident_id="INC-T-001",
        member_alert_ids=("RA-000001",),
        user=EntityContext(id=user_id, privilege_tier=tier),
        source_host=EntityContext(id=source),
        target_host=EntityContext(id=target) if target else None,
        historical_baseline="No prior access to srv-fin-03",
        event_summary="Kerberos TGT Request (Success)",
        event_type="auth.first_time_host_access",
        flags=("cross-tier-access", "unusual-TGT-request"),
        severity=6,
        outcome="Success",
        created_at=100,
        knowledge_version=1,
    )


# ---------------------------------------------------------------------------
# check_precondition
# ---------------------------------------------------------------------------

def _ctx(incident, graph):
    return actor_context_for(incident, graph)


def test_smb_edge_exists_satisfied(poc_store):
    ctx = _ctx(incident_for(), poc_store.graph)
    pred = predicate("edge_exists", kind="Reachable", src="$source", dst="$target", protocol="SMB")
    assert check_precondition(pred, ctx, poc_store.graph) is PreconditionStatus.SATISFIED


def test_actor_tier_unsatisfied(poc_store):
    ctx = _ctx(incident_for(tier=2), poc_store.graph)
    pred = predicate("tier_at_most", tier="1")
    assert check_precondition(pred, ctx, poc_store.graph) is PreconditionStatus.UNSATISFIED


def test_creds_on_host_unknown_when_unmodeled(poc_store):
    ctx = _ctx(incident_for(), poc_store.graph)
    pred = predicate("creds_on_host", tier="1", host="$target")
    assert check_precondition(pred, ctx, poc_store.graph) is PreconditionStatus.UNKNOWN


def test_creds_on_host_decided_when_modeled():
    nodes = {
        "u": EntityNode(id="u", kind=NodeKind.USER, privilege_tier=2),
        "a": EntityNode(id="a", kind=NodeKind.HOST),
        "b": EntityNode(id="b", kind=NodeKind.HOST, attributes=(("cached_cred_tiers", "1,2"),)),
    }
    graph = EnterpriseGraph(nodes, [], version=1)  # creds_on_host NOT unmodeled here
    ctx = ActorContext(actor="u", sessions=("a",), tier=2, bindings=(("$target", "b"),))
    assert check_precondition(predicate("creds_on_host", tier="1", host="$target"), ctx, graph) \
        is PreconditionStatus.SATISFIED
    assert check_precondition(predicate("creds_on_host", tier="3", host="$target"), ctx, graph) \
        is PreconditionStatus.UNSATISFIED


def test_malformed_predicate_is_validation_error(poc_store):
    ctx = _ctx(incident_for(), poc_store.graph)
    with pytest.raises(ValidationError):
        check_precondition(predicate("edge_exists", src="$source"), ctx, poc_store.graph)


# ---------------------------------------------------------------------------
# validate_hypothesis: the three POC verdicts
# ---------------------------------------------------------------------------

def test_h1_chain_is_feasible_with_witness(poc_store):
    verdict = validate_hypothesis(
        hypothesis(["T1078", "T1021"]), incident_for(), poc_store.graph, poc_store.techniques
    )
    assert verdict.status is FeasibilityStatus.FEASIBLE
    assert verdict.witness.nodes == ("ws-fin-27", "srv-fin-03")
    assert verdict.witness.edges[0][3] == "SMB"
    assert verdict.dependencies == ()


def test_h2_chain_conditionally_feasible_with_cred_dependency(poc_store):
    verdict = validate_hypothesis(
        hypothesis(["T1558", "T1068"], hid="H2"), incident_for(), poc_store.graph, poc_store.techniques
    )
    assert verdict.status is FeasibilityStatus.CONDITIONALLY_FEASIBLE
    assert len(verdict.dependencies) == 1
    dep = verdict.dependencies[0]
    assert dep.predicate.kind == "creds_on_host"
    assert dep.note == "Tier-1 creds exist on srv-fin-03"


def test_h3_benign_infeasible_citing_service_task(poc_store):
    verdict = validate_hypothesis(
        hypothesis(["B0001"], hid="H3", kind="Benign"),
        incident_for(),
        poc_store.graph,
        poc_store.techniques,
    )
    assert verdict.status is FeasibilityStatus.INFEASIBLE
    assert "service/task" in verdict.reason
    assert "user123" in verdict.reason
    assert verdict.failed_predicate.kind == "service_task_association"


def test_unknown_technique_is_error_not_infeasible(poc_store):
    with pytest.raises(ValidationError):
        validate_hypothesis(hypothesis(["T9999"]), incident_for(), poc_store.graph, poc_store.techniques)


def test_infeasible_reason_predicate_genuinely_unsatisfied(poc_store):
    verdict = validate_hypothesis(
        hypothesis(["B0001"], kind="Benign"), incident_for(), poc_store.graph, poc_store.techniques
    )
    ctx = _ctx(incident_for(), poc_store.graph)
    assert check_precondition(verdict.failed_predicate, ctx, poc_store.graph) is PreconditionStatus.UNSATISFIED


def test_feasible_witness_edges_exist_in_graph(poc_store):
    verdict = validate_hypothesis(
        hypothesis(["T1078", "T1021"]), incident_for(), poc_store.graph, poc_store.techniques
    )
    for src, dst, kind, protocol in verdict.witness.edges:
        assert poc_store.graph.edge_exists(src, dst, EdgeKind(kind), protocol)


def test_empty_chain_trivially_feasible(poc_store):
    verdict = validate_hypothesis(
        hypothesis([], kind="Benign"), incident_for(), poc_store.graph, poc_store.techniques
    )
    assert verdict.status is FeasibilityStatus.FEASIBLE
    assert verdict.witness.nodes == ("ws-fin-27",)


def test_determinism(poc_store):
    a = validate_hypothesis(hypothesis(["T1078", "T1021"]), incident_for(), poc_store.graph, poc_store.techniques)
    b = validate_hypothesis(hypothesis(["T1078", "T1021"]), incident_for(), poc_store.graph, poc_store.techniques)
    assert a.to_json() == b.to_json()


def test_monotonicity_adding_edges_never_breaks_feasible(poc_store):
    feasible = validate_hypothesis(
        hypothesis(["T1078", "T1021"]), incident_for(), poc_store.graph, poc_store.techniques
    )
    assert feasible.status is FeasibilityStatus.FEASIBLE
    grown = poc_store.graph.with_changes(
        add_edges=[make_edge("ws-fin-27", "srv-fin-02", EdgeKind.REACHABLE, protocol="SMB")]
    )
    regrown = validate_hypothesis(hypothesis(["T1078", "T1021"]), incident_for(), grown, poc_store.techniques)
    assert regrown.status is FeasibilityStatus.FEASIBLE


def test_conditional_upgrades_to_feasible_when_fact_added(poc_store):
    """Modeling the credential fact flips the Unknown to a decided value."""
    graph = poc_store.graph
    node = graph.nodes["srv-fin-03"].with_attr("cached_cred_tiers", "1")
    modeled = EnterpriseGraph(
        {**graph.nodes, "srv-fin-03": node},
        graph.all_edges(),
        version=graph.version + 1,
        unmodeled_facts=(),  # creds_on_host now modeled
    )
    verdict = validate_hypothesis(
        hypothesis(["T1558", "T1068"]), incident_for(), modeled, poc_store.techniques
    )
    assert verdict.status is FeasibilityStatus.FEASIBLE


# ---------------------------------------------------------------------------
# Verdict shape invariants
# ---------------------------------------------------------------------------

def test_verdict_field_conditioning():
    with pytest.raises(ValueError):
        FeasibilityVerdict(hypothesis_id="H1", status=FeasibilityStatus.CONDITIONALLY_FEASIBLE)
    with pytest.raises(ValueError):
        FeasibilityVerdict(hypothesis_id="H1", status=FeasibilityStatus.INFEASIBLE)
    with pytest.raises(ValueError):
        FeasibilityVerdict(hypothesis_id="H1", status=FeasibilityStatus.FEASIBLE, witness=None)
    FeasibilityVerdict(
        hypothesis_id="H1",
        status=FeasibilityStatus.FEASIBLE,
        witness=Witness(actor="u", nodes=("a",), edges=()),
    )


# ---------------------------------------------------------------------------
# find_attack_path
# ---------------------------------------------------------------------------

def test_poc_one_hop_path(poc_store):
    path = find_attack_path(poc_store.graph, ["ws-fin-27"], "srv-fin-03", protocol="SMB")
    assert path == ["ws-fin-27", "srv-fin-03"]


def test_target_equals_session_host(poc_store):
    assert find_attack_path(poc_store.graph, ["ws-fin-27"], "ws-fin-27") == ["ws-fin-27"]


def test_unknown_target_errors(poc_store):
    with pytest.raises(UnknownEntityError):
        find_attack_path(poc_store.graph, ["ws-fin-27"], "ghost")


@pytest.mark.parametrize("seed", range(40))
def test_find_attack_path_matches_bruteforce(seed):
    rng = random.Random(seed * 13 + 1)
    graph = random_host_graph(rng, max_nodes=8)
    ids = sorted(graph.nodes)
    for _ in range(6):
        sessions = rng.sample(ids, k=min(len(ids), rng.randint(1, 3)))
        target = rng.choice(ids)
        proto = rng.choice([None, "SMB"])
        assert find_attack_path(graph, sessions, target, protocol=proto) == oracle_attack_path(
            graph, sessions, target, protocol=proto
        )


# ---------------------------------------------------------------------------
# Chain simulation vs brute-force oracle on random worlds
# ---------------------------------------------------------------------------

def _random_world(rng: random.Random):
    graph = random_host_graph(rng, max_nodes=10)
    hosts = sorted(graph.nodes)
    actor = EntityNode(
        id="actor",
        kind=NodeKind.USER,
        privilege_tier=rng.randint(1, 3),
        attributes=(("service_tasks", "job"),) if rng.random() < 0.3 else (),
    )
    nodes = {**graph.nodes, "actor": actor}
    unmodeled = ("creds_on_host",) if rng.random() < 0.5 else ()
    world = EnterpriseGraph(nodes, graph.all_edges(), version=1, unmodeled_facts=unmodeled)
    source, target = rng.choice(hosts), rng.choice(hosts)

    pool = [
        predicate("has_session", host="$source"),
        predicate("reachable_from_session", target="$target"),
        predicate("reachable_from_session", target="$target", protocol="SMB"),
        predicate("tier_at_most", tier=str(rng.randint(1, 3))),
        predicate("creds_on_host", tier="1", host="$target"),
        predicate("service_task_association", user="$actor"),
        predicate("attr_absent", node="$actor", attr="mfa_enforced"),
    ]
    effects_pool = [
        (),
        (effect("gain_session", host="$target"),),
        (effect("gain_tier", tier="1"),),
    ]
    catalog = {}
    chain = []
    for i in range(rng.randint(1, 4)):
        tid = f"TX{i}"
        preds = tuple(rng.sample(pool, k=rng.randint(0, 2)))
        effs = effects_pool[rng.randrange(len(effects_pool))]
        catalog[tid] = TechniqueSpec(tid, f"Technique {i}", "test", preconditions=preds, effects=effs)
        chain.append(tid)
    incident = replace(
        incident_for(user_id="actor", source=source, target=target, tier=actor.privilege_tier),
    )
    return world, catalog, chain, incident


@pytest.mark.parametrize("seed", range(60))
def test_validate_matches_bruteforce_simulator(seed):
    rng = random.Random(seed * 7 + 3)
    world, catalog, chain, incident = _random_world(rng)
    verdict = validate_hypothesis(hypothesis(chain), incident, world, catalog)
    status, notes, reason = oracle_validate(hypothesis(chain), incident, world, catalog)
    assert verdict.status.value == status
    if status == "ConditionallyFeasible":
        assert sorted(d.predicate.kind for d in verdict.dependencies) == sorted(notes)
    if status == "Infeasible":
        oracle_tid, oracle_kind = reason.split(":")
        assert verdict.failed_predicate.kind == oracle_kind
        assert oracle_tid in verdict.reason
