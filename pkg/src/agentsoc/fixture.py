"""Deterministic fixture generation: topology, events, data tables.

``generate_fixture(seed, out_dir)`` writes a self-contained scenario
directory: a 50-node enterprise snapshot (finance workstation ws-fin-27,
finance DB srv-fin-03 at criticality 9, analyst user123 at tier 2, SMB
reachability between them), an auth event stream whose second half
contains exactly one anomalous access, the technique/transition catalog,
the NCE mapping tables, the containment calibration table, and a config
file wiring them together. Identical seeds give byte-identical output.
"""

from __future__ import annotations

import json
import random
from pathlib import Path

from .knowledge import (
    Edge,
    EdgeKind,
    EnterpriseGraph,
    EntityNode,
    ImpactParams,
    KnowledgeStore,
    NodeKind,
    PolicyConstraint,
    PolicyEffect,
    TechniqueSpec,
    TransitionTable,
    effect,
    make_edge,
    predicate,
)

DOMAIN = "CORP"

# Techniques covering the scenario narrative: valid accounts, Kerberos
# ticket abuse, credential dumping, SMB lateral movement, privilege
# escalation, plus a benign-explanation pseudo-technique for the
# misconfiguration hypothesis. Transition weights are editorial.
def technique_catalog() -> dict[str, TechniqueSpec]:
    specs = [
        TechniqueSpec(
            "T1078",
            "Valid Accounts",
            "defense-evasion",
            preconditions=(predicate("has_session", host="$source"),),
            effects=(),
            phrase="Credential misuse",
        ),
        TechniqueSpec(
            "T1110",
            "Brute Force",
            "credential-access",
            preconditions=(predicate("reachable_from_session", target="$target"),),
            effects=(),
            phrase="Password guessing",
        ),
        TechniqueSpec(
            "T1003",
            "OS Credential Dumping",
            "credential-access",
            preconditions=(predicate("has_session", host="$source"),),
            effects=(),
            phrase="Credential dumping",
        ),
        TechniqueSpec(
            "T1558",
            "Steal or Forge Kerberos Tickets",
            "credential-access",
            preconditions=(
                predicate("has_session", host="$source"),
                predicate("attr_absent", node="$actor", attr="mfa_enforced"),
            ),
            effects=(),
            phrase="Kerberos ticket abuse",
        ),
        TechniqueSpec(
            "T1550",
            "Use Alternate Authentication Material",
            "lateral-movement",
            preconditions=(predicate("reachable_from_session", target="$target"),),
            effects=(effect("gain_session", host="$target"),),
            phrase="Pass-the-ticket movement",
        ),
        TechniqueSpec(
            "T1021",
            "Remote Services",
            "lateral-movement",
            preconditions=(predicate("reachable_from_session", target="$target", protocol="SMB"),),
            effects=(effect("gain_session", host="$target"),),
            phrase="lateral movement over SMB",
        ),
        TechniqueSpec(
            "T1570",
            "Lateral Tool Transfer",
            "lateral-movement",
            preconditions=(predicate("has_session", host="$target"),),
            effects=(),
            phrase="Tool staging",
        ),
        TechniqueSpec(
            "T1068",
            "Exploitation for Privilege Escalation",
            "privilege-escalation",
            preconditions=(
                predicate("reachable_from_session", target="$target"),
                predicate("creds_on_host", tier="1", host="$target"),
            ),
            effects=(effect("gain_tier", tier="1"), effect("gain_session", host="$target")),
            phrase="privilege escalation",
        ),
        TechniqueSpec(
            "T1098",
            "Account Manipulation",
            "persistence",
            preconditions=(predicate("tier_at_most", tier="1"),),
            effects=(),
            phrase="Account manipulation",
        ),
        TechniqueSpec(
            "T1087",
            "Account Discovery",
            "discovery",
            preconditions=(predicate("has_session", host="$source"),),
            effects=(),
            phrase="Account discovery",
        ),
        TechniqueSpec(
            "T1018",
            "Remote System Discovery",
            "discovery",
            preconditions=(predicate("has_session", host="$source"),),
            effects=(),
            phrase="Network discovery",
        ),
        TechniqueSpec(
            "T1033",
            "System Owner/User Discovery",
            "discovery",
            preconditions=(predicate("has_session", host="$source"),),
            effects=(),
            phrase="User discovery",
        ),
        TechniqueSpec(
            "T1005",
            "Data from Local System",
            "collection",
            preconditions=(predicate("has_session", host="$target"),),
            effects=(),
            phrase="Data staging",
        ),
        TechniqueSpec(
            "T1041",
            "Exfiltration Over C2 Channel",
            "exfiltration",
            preconditions=(predicate("has_session", host="$target"),),
            effects=(),
            phrase="Exfiltration",
        ),
        TechniqueSpec(
            "B0001",
            "Authorized Service Task",
            "benign",
            preconditions=(predicate("service_task_association", user="$actor"),),
            effects=(),
            phrase="Benign misconfiguration",
        ),
    ]
    return {s.technique_id: s for s in specs}


def transition_table() -> TransitionTable:
    return TransitionTable(
        {
            "T1078": [("T1021", 0.8), ("T1558", 0.6), ("T1087", 0.3)],
            "T1110": [("T1078", 0.7)],
            "T1003": [("T1550", 0.8), ("T1558", 0.5)],
            "T1558": [("T1068", 0.75), ("T1550", 0.6)],
            "T1550": [("T1021", 0.7)],
            "T1021": [("T1570", 0.5), ("T1005", 0.4)],
            "T1570": [("T1005", 0.6)],
            "T1068": [("T1003", 0.5), ("T1098", 0.4)],
            "T1087": [("T1078", 0.4)],
            "T1018": [("T1021", 0.45)],
            "T1033": [("T1087", 0.5)],
            "T1005": [("T1041", 0.7)],
        }
    )


def nce_tables() -> dict:
    return {
        "comment": "editorial mapping/weight tables; weights are not dataset-derived",
        "feature_weights": {
            "flag:cross-tier-access": 0.3,
            "baseline:first-access": 0.25,
            "outcome:success": 0.1,
            "flag:unusual-TGT-request": 0.2,
            "flag:deviation-flagged": 0.25,
            "flag:first-time-host-access": 0.1,
            "flag:repeated-failure": 0.15,
            "flag:lateral-move-burst": 0.2,
            "flag:cross-domain": 0.1,
            "flag:geo-change": 0.15,
            "flag:unknown-entity": 0.05,
            "severity:high": 0.15,
        },
        "seed_map": {
            "auth.first_time_host_access": ["T1078"],
            "auth.tgt_request": ["T1558"],
            "auth.lateral_move_burst": ["T1078", "T1021"],
            "auth.repeated_failure": ["T1110"],
            "auth.cross_domain": ["T1078"],
            "auth.cross_tier": ["T1078"],
            "cred.dumping": ["T1003"],
            "flag:unusual-TGT-request": ["T1558"],
            "flag:cross-tier-access": ["T1078"],
            "flag:lateral-move-burst": ["T1021"],
        },
        "technique_evidence": {
            "T1078": [
                "flag:cross-tier-access",
                "baseline:first-access",
                "outcome:success",
                "flag:deviation-flagged",
                "flag:cross-domain",
            ],
            "T1021": ["flag:cross-tier-access", "baseline:first-access", "flag:lateral-move-burst"],
            "T1558": [
                "flag:unusual-TGT-request",
                "outcome:success",
                "baseline:first-access",
                "flag:deviation-flagged",
            ],
            "T1068": ["severity:high"],
            "T1003": ["flag:deviation-flagged", "severity:high"],
            "T1110": ["flag:repeated-failure", "outcome:failure"],
            "T1550": ["flag:unusual-TGT-request", "flag:lateral-move-burst"],
        },
        "benign_technique": "B0001",
    }


def calibration_table() -> dict:
    return {
        "comment": "maps raw path-cut fractions to reported containment",
        "ISOLATE_HOST": {"mode": "scale", "factor": 0.92},
        "DISABLE_USER": {"mode": "scale", "factor": 0.84},
        "QUARANTINE_ACCESS": {"mode": "scale", "factor": 0.9},
        "REVOKE_SESSION": {"mode": "scale", "factor": 0.7},
        "RESTRICT_PRIVILEGES": {"mode": "scale", "factor": 0.6},
        "ENABLE_MFA": {"mode": "scale", "factor": 0.5},
        "MONITOR_ONLY": {"mode": "constant", "value": 0.15},
    }


def build_store(seed: int = 42) -> KnowledgeStore:
    """The 50-node scenario topology, deterministic in the seed."""
    rng = random.Random(seed)
    nodes: list[EntityNode] = []
    edges: list[Edge] = []

    def host(hid: str, role: str, criticality: int, **attrs: str) -> None:
        items = dict(attrs)
        items["role"] = role
        nodes.append(
            EntityNode(
                id=hid,
                kind=NodeKind.HOST,
                attributes=tuple(sorted(items.items())),
                criticality=criticality,
            )
        )

    def user(uid: str, role: str, tier: int, **attrs: str) -> None:
        items = dict(attrs)
        items["role"] = role
        nodes.append(
            EntityNode(
                id=uid,
                kind=NodeKind.USER,
                attributes=tuple(sorted(items.items())),
                privilege_tier=tier,
            )
        )

    def group(gid: str, **attrs: str) -> None:
        nodes.append(EntityNode(id=gid, kind=NodeKind.GROUP, attributes=tuple(sorted(attrs.items()))))

    def service(sid: str, role: str, criticality: int) -> None:
        nodes.append(
            EntityNode(
                id=sid,
                kind=NodeKind.SERVICE,
                attributes=(("role", role),),
                criticality=criticality,
            )
        )

    # Hosts (20)
    fin_workstations = [f"ws-fin-{i:02d}" for i in (1, 2, 27)]
    for hid in fin_workstations:
        host(hid, "Finance workstation", 3)
    fin_servers = ["srv-fin-01", "srv-fin-02", "srv-fin-03"]
    host("srv-fin-01", "Finance app server", 6)
    host("srv-fin-02", "Finance reporting server", 6)
    host("srv-fin-03", "Finance DB", 9)
    eng_workstations = [f"ws-eng-{i:02d}" for i in (1, 2, 3)]
    for hid in eng_workstations:
        host(hid, "Engineering workstation", 3)
    eng_servers = ["srv-eng-01", "srv-eng-02"]
    for hid in eng_servers:
        host(hid, "Engineering build server", 5)
    hr_workstations = ["ws-hr-01", "ws-hr-02"]
    for hid in hr_workstations:
        host(hid, "HR workstation", 3)
    host("srv-hr-01", "HR records server", 7)
    it_hosts = ["ws-it-01", "ws-it-02"]
    for hid in it_hosts:
        host(hid, "IT admin workstation", 4)
    host("dc-01", "Domain controller", 10, tags="tier0-critical", admin_tier="1")
    host("srv-file-01", "File share server", 5)
    host("srv-mail-01", "Mail server", 7)
    host("bastion-01", "Bastion host", 6)

    # Users (15)
    user("user123", "Finance Analyst", 2)
    user("user124", "Finance Analyst", 2)
    user("user125", "Finance Manager", 2)
    for i, uid in enumerate(["user201", "user202", "user203", "user204"]):
        user(uid, "Engineer", 3)
    user("user301", "HR Specialist", 3)
    user("user302", "HR Specialist", 3)
    user("admin01", "Domain Admin", 1)
    user("admin02", "IT Operator", 2)
    user("svc-acct-01", "Service Account", 3, service_tasks="backup-nightly")
    user("user401", "Contractor", 4)
    user("user402", "Contractor", 4)
    user("exec01", "CFO", 2, tags="executive")

    # Groups (10)
    group("grp-finance", department="finance")
    group("grp-finance-admins", department="finance", grants_tier="2")
    group("grp-eng", department="engineering")
    group("grp-hr", department="hr")
    group("grp-it-admins", department="it", grants_tier="1")
    group("grp-contractors", department="external")
    group("grp-executives", department="leadership")
    group("grp-smb-pivot", note="members may traverse finance SMB shares")
    group("grp-backup-operators", department="it")
    group("grp-all-staff", department="corp")

    # Services (5)
    service("svc-backup", "Backup orchestration", 6)
    service("svc-web-portal", "Intranet portal", 5)
    service("svc-ci", "CI pipeline", 5)
    service("svc-payroll", "Payroll processing", 8)
    service("svc-monitoring", "Telemetry collector", 4)

    assert len(nodes) == 50, f"topology must have exactly 50 nodes, got {len(nodes)}"

    # Memberships
    for uid in ("user123", "user124", "user125"):
        edges.append(make_edge(uid, "grp-finance", EdgeKind.MEMBER_OF))
    edges.append(make_edge("user125", "grp-finance-admins", EdgeKind.MEMBER_OF))
    for uid in ("user201", "user202", "user203", "user204"):
        edges.append(make_edge(uid, "grp-eng", EdgeKind.MEMBER_OF))
    for uid in ("user301", "user302"):
        edges.append(make_edge(uid, "grp-hr", EdgeKind.MEMBER_OF))
    edges.append(make_edge("admin01", "grp-it-admins", EdgeKind.MEMBER_OF))
    edges.append(make_edge("admin02", "grp-it-admins", EdgeKind.MEMBER_OF))
    edges.append(make_edge("user401", "grp-contractors", EdgeKind.MEMBER_OF))
    edges.append(make_edge("user402", "grp-contractors", EdgeKind.MEMBER_OF))
    edges.append(make_edge("exec01", "grp-executives", EdgeKind.MEMBER_OF))
    edges.append(make_edge("user123", "grp-smb-pivot", EdgeKind.MEMBER_OF))
    edges.append(make_edge("svc-acct-01", "grp-backup-operators", EdgeKind.MEMBER_OF))

    # Admin rights
    edges.append(make_edge("grp-it-admins", "dc-01", EdgeKind.ADMIN_OF))
    edges.append(make_edge("admin01", "srv-file-01", EdgeKind.ADMIN_OF))
    edges.append(make_edge("grp-finance-admins", "srv-fin-03", EdgeKind.ADMIN_OF))

    # Sessions: the actor's foothold plus routine ones.
    edges.append(make_edge("user123", "ws-fin-27", EdgeKind.HAS_SESSION_ON))
    edges.append(make_edge("user124", "ws-fin-01", EdgeKind.HAS_SESSION_ON))
    edges.append(make_edge("user125", "ws-fin-02", EdgeKind.HAS_SESSION_ON))
    edges.append(make_edge("user201", "ws-eng-01", EdgeKind.HAS_SESSION_ON))
    edges.append(make_edge("admin01", "ws-it-01", EdgeKind.HAS_SESSION_ON))
    edges.append(make_edge("user301", "ws-hr-01", EdgeKind.HAS_SESSION_ON))

    # Auth paths used for routine work.
    edges.append(make_edge("user123", "srv-fin-01", EdgeKind.CAN_AUTH_TO))
    edges.append(make_edge("user123", "srv-fin-02", EdgeKind.CAN_AUTH_TO))
    edges.append(make_edge("user124", "srv-fin-01", EdgeKind.CAN_AUTH_TO))
    edges.append(make_edge("admin01", "dc-01", EdgeKind.CAN_AUTH_TO))
    edges.append(make_edge("svc-acct-01", "srv-file-01", EdgeKind.CAN_AUTH_TO))

    # Reachability. The pivotal SMB edge is fixed; filler edges are seeded.
    edges.append(make_edge("ws-fin-27", "srv-fin-03", EdgeKind.REACHABLE, protocol="SMB", allowed_by="grp-smb-pivot"))
    edges.append(make_edge("ws-fin-27", "srv-fin-01", EdgeKind.REACHABLE, protocol="SMB"))
    edges.append(make_edge("ws-fin-01", "srv-fin-01", EdgeKind.REACHABLE, protocol="SMB"))
    edges.append(make_edge("ws-fin-02", "srv-fin-02", EdgeKind.REACHABLE, protocol="HTTPS"))
    edges.append(make_edge("srv-fin-01", "srv-fin-03", EdgeKind.REACHABLE, protocol="SQL"))
    edges.append(make_edge("ws-it-01", "dc-01", EdgeKind.REACHABLE, protocol="RDP"))
    edges.append(make_edge("ws-it-02", "dc-01", EdgeKind.REACHABLE, protocol="RDP"))
    edges.append(make_edge("bastion-01", "srv-eng-01", EdgeKind.REACHABLE, protocol="SSH"))
    edges.append(make_edge("bastion-01", "srv-eng-02", EdgeKind.REACHABLE, protocol="SSH"))
    hosts_pool = sorted(
        fin_workstations + eng_workstations + hr_workstations + it_hosts + ["srv-file-01", "srv-mail-01"]
    )
    existing = {(e.src, e.dst) for e in edges}
    filler = 0
    while filler < 12:
        src = rng.choice(hosts_pool)
        dst = rng.choice(hosts_pool)
        if src == dst or (src, dst) in existing:
            continue
        proto = rng.choice(["HTTPS", "RDP", "SSH"])
        edges.append(make_edge(src, dst, EdgeKind.REACHABLE, protocol=proto))
        existing.add((src, dst))
        filler += 1

    # Trust: finance servers trust the DC.
    edges.append(make_edge("srv-fin-03", "dc-01", EdgeKind.TRUSTED_BY))

    graph = EnterpriseGraph(
        {n.id: n for n in nodes},
        edges,
        version=1,
        unmodeled_facts=("creds_on_host",),
    )

    impact = {
        # Reverse-fitted so isolate(ws-fin-27) reports 0.15 and
        # disable(user123) reports 0.30 at disruption factor 1.0.
        "ws-fin-27": ImpactParams(0.15, 0.15, 0.15),
        "user123": ImpactParams(0.30, 0.30, 0.30),
        "srv-fin-03": ImpactParams(0.9, 0.55, 0.85),
        "srv-fin-01": ImpactParams(0.6, 0.4, 0.5),
        "dc-01": ImpactParams(1.0, 0.9, 1.0),
        "srv-hr-01": ImpactParams(0.7, 0.5, 0.9),
        "srv-mail-01": ImpactParams(0.8, 0.7, 0.6),
        "exec01": ImpactParams(0.5, 0.6, 0.7),
        "admin01": ImpactParams(0.6, 0.5, 0.6),
    }

    policies = [
        PolicyConstraint(
            policy_id="POL-001",
            effect=PolicyEffect.FORBID,
            primitives=frozenset({"ISOLATE_HOST", "QUARANTINE_ACCESS"}),
            target_tags=frozenset({"tier0-critical"}),
            description="never isolate tier0-critical infrastructure",
        ),
        PolicyConstraint(
            policy_id="POL-002",
            effect=PolicyEffect.REQUIRE_APPROVAL,
            primitives=frozenset({"DISABLE_USER"}),
            target_tags=frozenset({"executive"}),
            description="disabling executive accounts needs an analyst",
        ),
        PolicyConstraint(
            policy_id="POL-003",
            effect=PolicyEffect.REQUIRE_APPROVAL,
            primitives=frozenset({"RESTRICT_PRIVILEGES"}),
            target_ids=frozenset({"admin01"}),
            description="domain admin privilege changes need an analyst",
        ),
    ]

    return KnowledgeStore(
        graph,
        techniques=technique_catalog(),
        transitions=transition_table(),
        impact_params=impact,
        policies=policies,
    )


# ---------------------------------------------------------------------------
# Event streams
# ---------------------------------------------------------------------------

def _line(t: int, user: str, dst_user: str, src: str, dst: str, auth: str, logon: str, orient: str, ok: bool) -> str:
    outcome = "Success" if ok else "Fail"
    return f"{t},{user}@{DOMAIN},{dst_user}@{DOMAIN},{src},{dst},{auth},{logon},{orient},{outcome}"


def generate_poc_events(seed: int = 42) -> str:
    """500 events: first half routine baseline, second half routine except
    one first-time Kerberos TGT access user123 -> srv-fin-03.

    The baseline half enumerates every routine (user, destination) pair
    before random fill, so the evaluation half never produces incidental
    first-time accesses. Evaluation routines keep each user at no more
    than two distinct destinations, below the lateral-move burst
    threshold, leaving the trigger as the only anomaly for any seed.
    """
    rng = random.Random(seed + 1)
    baseline_routines = [
        ("user123", "ws-fin-27", ["ws-fin-27", "srv-fin-01", "srv-fin-02"]),
        ("user124", "ws-fin-01", ["ws-fin-01", "srv-fin-01"]),
        ("user125", "ws-fin-02", ["ws-fin-02", "srv-fin-02"]),
        ("user201", "ws-eng-01", ["ws-eng-01", "srv-eng-01"]),
        ("user202", "ws-eng-02", ["ws-eng-02", "srv-eng-02"]),
        ("user301", "ws-hr-01", ["ws-hr-01", "srv-hr-01"]),
        ("admin01", "ws-it-01", ["ws-it-01", "dc-01"]),
        ("svc-acct-01", "srv-file-01", ["srv-file-01"]),
    ]
    eval_routines = [
        ("user123", "ws-fin-27", ["ws-fin-27"]),
        ("user124", "ws-fin-01", ["ws-fin-01", "srv-fin-01"]),
        ("user125", "ws-fin-02", ["ws-fin-02", "srv-fin-02"]),
        ("user201", "ws-eng-01", ["ws-eng-01", "srv-eng-01"]),
        ("user202", "ws-eng-02", ["ws-eng-02", "srv-eng-02"]),
        ("user301", "ws-hr-01", ["ws-hr-01", "srv-hr-01"]),
        ("admin01", "ws-it-01", ["ws-it-01", "dc-01"]),
        ("svc-acct-01", "srv-file-01", ["srv-file-01"]),
    ]
    coverage = [(u, src, d) for u, src, dsts in baseline_routines for d in dsts]

    lines: list[str] = []
    t = 0
    total, half, trigger_index = 500, 250, 430
    for i in range(total):
        t += rng.randint(5, 40)
        if i == trigger_index:
            lines.append(_line(t, "user123", "user123", "ws-fin-27", "srv-fin-03", "Kerberos", "Network", "TGT", True))
            continue
        if i < len(coverage):
            user, src, dst = coverage[i]
        else:
            routines = baseline_routines if i < half else eval_routines
            user, src, dsts = routines[rng.randrange(len(routines))]
            dst = dsts[rng.randrange(len(dsts))]
        orient = "LogOn" if dst != src else rng.choice(["LogOn", "LogOff"])
        lines.append(_line(t, user, user, src, dst, "Kerberos", "Network", orient, True))
    return "\n".join(lines) + "\n"


def generate_lanl_sample(seed: int = 42, n: int = 5000) -> str:
    """A LANL-shaped synthetic auth sample: anonymous U/C identifiers,
    mostly routine logons with occasional failures and rare-host bursts."""
    rng = random.Random(seed + 2)
    users = [f"U{i}" for i in range(1, 61)]
    hosts = [f"C{i}" for i in range(1, 121)]
    home = {u: rng.sample(hosts, k=rng.randint(2, 5)) for u in users}
    lines: list[str] = []
    t = 0
    for _ in range(n):
        t += rng.randint(0, 3)
        u = users[rng.randrange(len(users))]
        src = home[u][0]
        roll = rng.random()
        if roll < 0.90:
            dst = home[u][rng.randrange(len(home[u]))]
            ok = rng.random() > 0.02
            orient = "LogOn"
        elif roll < 0.97:
            dst = hosts[rng.randrange(len(hosts))]
            ok = True
            orient = rng.choice(["LogOn", "TGT", "TGS"])
        else:
            dst = home[u][rng.randrange(len(home[u]))]
            ok = False
            orient = "LogOn"
        auth = rng.choice(["Kerberos", "NTLM", "?"])
        lines.append(_line(t, u, u, src, dst, auth, "Network", orient, ok))
    return "\n".join(lines) + "\n"


CONFIG_TEMPLATE = """# Generated scenario configuration
[ingest]
baseline_fraction = 0.5

[perception]
incident_source_label = "POC"

[rsem]
alpha = 0.7
beta = 0.3
gamma = 0.0

[playbook]
approval_threshold = 0.5
"""


def generate_fixture(seed: int, out_dir: str | Path) -> dict[str, Path]:
    """Write the full scenario directory; returns the emitted paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    store = build_store(seed)
    paths = {
        "snapshot": out / "snapshot.json",
        "events": out / "events.csv",
        "lanl_sample": out / "lanl_sample.csv",
        "nce_tables": out / "nce_tables.json",
        "calibration": out / "calibration.json",
        "config": out / "agentsoc.toml",
    }
    store.save(paths["snapshot"])
    paths["events"].write_text(generate_poc_events(seed), encoding="utf-8")
    paths["lanl_sample"].write_text(generate_lanl_sample(seed), encoding="utf-8")
    paths["nce_tables"].write_text(json.dumps(nce_tables(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    paths["calibration"].write_text(
        json.dumps(calibration_table(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    paths["config"].write_text(CONFIG_TEMPLATE, encoding="utf-8")
    return paths
