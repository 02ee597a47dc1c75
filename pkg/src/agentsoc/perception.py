"""Perception layer: unify raw alerts, cluster duplicates, enrich context.

Raw alerts from registered source schemas become NormalizedAlerts in a
closed event-type vocabulary; duplicate low-severity alerts are suppressed
per time bucket; surviving clusters are enriched against a knowledge
version and a behavioral baseline into IncidentObjects.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .config import PerceptionConfig
from .errors import EnrichmentUnavailableError, NormalizationError
from .ingest import AlertKind, Baseline, RawAlert
from .knowledge import KnowledgeStore, NodeKind, privilege_tier

logger = logging.getLogger(__name__)

CANONICAL_EVENT_TYPES = frozenset(
    {
        "auth.first_time_host_access",
        "auth.repeated_failure",
        "auth.lateral_move_burst",
        "auth.cross_domain",
        "auth.geo_change",
        "auth.cross_tier",
        "auth.tgt_request",
        "cred.dumping",
        "proc.suspicious_powershell",
    }
)

FLAG_VOCABULARY = frozenset(
    {
        "unusual-TGT-request",
        "cross-tier-access",
        "unknown-entity",
        "first-time-host-access",
        "repeated-failure",
        "lateral-move-burst",
        "cross-domain",
        "geo-change",
        "deviation-flagged",
    }
)

_INGEST_EVENT_TYPES: dict[AlertKind, str] = {
    AlertKind.FIRST_TIME_HOST_ACCESS: "auth.first_time_host_access",
    AlertKind.REPEATED_FAILURE: "auth.repeated_failure",
    AlertKind.SHORT_INTERVAL_LATERAL_MOVE: "auth.lateral_move_burst",
    AlertKind.CROSS_DOMAIN_ACCESS: "auth.cross_domain",
    AlertKind.GEO_CHANGE: "auth.geo_change",
    AlertKind.CROSS_TIER_ACCESS: "auth.cross_tier",
}

# FirstTimeHostAccess has no flag of its own: the baseline note and the
# unusual-TGT rule already carry that signal into evidence.
_ALERT_KIND_FLAGS: dict[AlertKind, str] = {
    AlertKind.REPEATED_FAILURE: "repeated-failure",
    AlertKind.SHORT_INTERVAL_LATERAL_MOVE: "lateral-move-burst",
    AlertKind.CROSS_DOMAIN_ACCESS: "cross-domain",
    AlertKind.GEO_CHANGE: "geo-change",
}

# Generic SIEM event-type tokens accepted by the "siem" schema.
_SIEM_EVENT_TYPES: dict[str, str] = {
    "kerberos_tgt_request": "auth.tgt_request",
    "credential_dumping": "cred.dumping",
    "suspicious_powershell": "proc.suspicious_powershell",
    "first_time_host_access": "auth.first_time_host_access",
    "repeated_failure": "auth.repeated_failure",
}

SOURCE_SYSTEMS = frozenset({"siem", "edr", "ndr", "cloud", "os", "ingest", "canonical"})


@dataclass(frozen=True)
class NormalizedAlert:
    alert_id: str
    source_system: str
    canonical_event_type: str
    timestamp: int  # UTC epoch (or dataset-relative) seconds
    severity: int
    principal: str
    source_host: str
    dest_host: str | None
    outcome: str
    payload: Mapping  # raw record, retained by reference

    def __post_init__(self) -> None:
        if self.canonical_event_type not in CANONICAL_EVENT_TYPES:
            raise NormalizationError(
                f"{self.canonical_event_type!r} not in the canonical vocabulary",
                field="canonical_event_type",
            )
        if not 1 <= self.severity <= 10:
            raise NormalizationError("severity must be in [1, 10]", field="severity")

    def to_json(self) -> dict:
        return {
            "alert_id": self.alert_id,
            "source_system": self.source_system,
            "canonical_event_type": self.canonical_event_type,
            "timestamp": self.timestamp,
            "severity": self.severity,
            "principal": self.principal,
            "source_host": self.source_host,
            "dest_host": self.dest_host,
            "outcome": self.outcome,
            "payload": _as_plain(self.payload),
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "NormalizedAlert":
        return cls(
            alert_id=doc["alert_id"],
            source_system=doc["source_system"],
            canonical_event_type=doc["canonical_event_type"],
            timestamp=int(doc["timestamp"]),
            severity=int(doc["severity"]),
            principal=doc["principal"],
            source_host=doc["source_host"],
            dest_host=doc.get("dest_host"),
            outcome=doc["outcome"],
            payload=doc.get("payload", {}),
        )


def _as_plain(obj):
    return json.loads(json.dumps(obj))


def _require(record: Mapping, key: str):
    if key not in record or record[key] in (None, ""):
        raise NormalizationError(f"missing mandatory field {key!r}", field=key)
    return record[key]


def normalize(raw, source_schema: str = "ingest") -> NormalizedAlert:
    """Map a raw alert into the unified schema.

    Registered schemas: ``ingest`` (RawAlert from the auth detector),
    ``siem`` (generic JSON records), and ``canonical`` (a serialized
    NormalizedAlert, making normalization idempotent).
    """
    if source_schema == "ingest":
        if isinstance(raw, Mapping):
            raw = RawAlert.from_json(raw)
        if not isinstance(raw, RawAlert):
            raise NormalizationError("ingest schema expects a RawAlert", field="payload")
        rep = raw.triggering_events[-1]
        return NormalizedAlert(
            alert_id=raw.alert_id,
            source_system="ingest",
            canonical_event_type=_INGEST_EVENT_TYPES[raw.kind],
            timestamp=raw.detected_at,
            severity=raw.severity,
            principal=rep.source_user,
            source_host=rep.source_host,
            dest_host=rep.dest_host if rep.dest_host not in ("", "?") else None,
            outcome=rep.outcome,
            payload=raw.to_json(),
        )
    if source_schema == "siem":
        if not isinstance(raw, Mapping):
            raise NormalizationError("siem schema expects a mapping", field="payload")
        event_type = str(_require(raw, "event_type")).lower()
        canonical = _SIEM_EVENT_TYPES.get(event_type)
        if canonical is None:
            raise NormalizationError(f"unmapped siem event_type {event_type!r}", field="event_type")
        timestamp = _require(raw, "timestamp")
        return NormalizedAlert(
            alert_id=str(_require(raw, "alert_id")),
            source_system="siem",
            canonical_event_type=canonical,
            timestamp=int(timestamp),
            severity=int(raw.get("severity", 5)),
            principal=str(_require(raw, "user")),
            source_host=str(_require(raw, "source_host")),
            dest_host=raw.get("dest_host"),
            outcome=str(raw.get("outcome", "Success")),
            payload=raw,
        )
    if source_schema == "canonical":
        if not isinstance(raw, Mapping):
            raise NormalizationError("canonical schema expects a mapping", field="payload")
        for key in ("alert_id", "canonical_event_type", "timestamp", "severity", "principal", "source_host"):
            _require(raw, key)
        return NormalizedAlert.from_json(raw)
    raise NormalizationError(f"unregistered source schema {source_schema!r}", field="source_schema")


# ---------------------------------------------------------------------------
# Noise reduction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AlertCluster:
    key: tuple[str, str, str, int]  # (principal, source_host, dest_host, bucket)
    members: tuple[NormalizedAlert, ...]
    representative: NormalizedAlert

    def member_ids(self) -> list[str]:
        return [a.alert_id for a in self.members]


def cluster_key(alert: NormalizedAlert, bucket_s: int) -> tuple[str, str, str, int]:
    return (
        alert.principal,
        alert.source_host,
        alert.dest_host or "",
        alert.timestamp // bucket_s,
    )


def reduce_noise(
    alerts: Sequence[NormalizedAlert],
    window_s: int = 60,
    notable_severity: int = 7,
) -> tuple[list[AlertCluster], list[str]]:
    """Cluster related alerts and suppress exact low-severity duplicates.

    Duplicates share (canonical_event_type, principal, hosts, bucket); the
    earliest survives, later copies below the notable threshold are
    suppressed. Nothing at or above the threshold is ever dropped.
    """
    if window_s <= 0:
        raise ValueError("window_s must be > 0")
    groups: dict[tuple[str, str, str, int], list[NormalizedAlert]] = {}
    for alert in alerts:
        groups.setdefault(cluster_key(alert, window_s), []).append(alert)

    clusters: list[AlertCluster] = []
    suppressed: list[str] = []
    for key, group in groups.items():
        members: list[NormalizedAlert] = []
        by_type: dict[str, list[NormalizedAlert]] = {}
        for alert in group:
            by_type.setdefault(alert.canonical_event_type, []).append(alert)
        for _, dupes in sorted(by_type.items()):
            dupes.sort(key=lambda a: (a.timestamp, a.alert_id))
            members.append(dupes[0])
            for extra in dupes[1:]:
                if extra.severity >= notable_severity:
                    members.append(extra)
                else:
                    suppressed.append(extra.alert_id)
        members.sort(key=lambda a: (a.timestamp, a.alert_id))
        clusters.append(AlertCluster(key=key, members=tuple(members), representative=members[0]))
    clusters.sort(key=lambda c: (c.representative.timestamp, c.representative.alert_id))
    suppressed.sort()
    return clusters, suppressed


# ---------------------------------------------------------------------------
# Enrichment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EntityContext:
    id: str
    role: str | None = None
    criticality: int | None = None
    privilege_tier: int | None = None
    known: bool = True

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "role": self.role,
            "criticality": self.criticality,
            "privilege_tier": self.privilege_tier,
            "known": self.known,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "EntityContext":
        return cls(
            id=doc["id"],
            role=doc.get("role"),
            criticality=doc.get("criticality"),
            privilege_tier=doc.get("privilege_tier"),
            known=bool(doc.get("known", True)),
        )


@dataclass(frozen=True)
class IncidentObject:
    incident_id: str
    member_alert_ids: tuple[str, ...]
    user: EntityContext
    source_host: EntityContext
    target_host: EntityContext | None
    historical_baseline: str
    event_summary: str
    event_type: str
    flags: tuple[str, ...]
    severity: int
    outcome: str
    created_at: int
    knowledge_version: int
    alerts: tuple[NormalizedAlert, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        if not self.member_alert_ids:
            raise ValueError("member_alert_ids must be non-empty")
        unknown_flags = set(self.flags) - FLAG_VOCABULARY
        if unknown_flags:
            raise ValueError(f"flags outside vocabulary: {sorted(unknown_flags)}")

    def to_json(self) -> dict:
        return {
            "incident_id": self.incident_id,
            "member_alert_ids": list(self.member_alert_ids),
            "user": self.user.to_json(),
            "source_host": self.source_host.to_json(),
            "target_host": self.target_host.to_json() if self.target_host else None,
            "historical_baseline": self.historical_baseline,
            "event_summary": self.event_summary,
            "event_type": self.event_type,
            "flags": list(self.flags),
            "severity": self.severity,
            "outcome": self.outcome,
            "created_at": self.created_at,
            "knowledge_version": self.knowledge_version,
            "alerts": [a.to_json() for a in self.alerts],
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "IncidentObject":
        return cls(
            incident_id=doc["incident_id"],
            member_alert_ids=tuple(doc["member_alert_ids"]),
            user=EntityContext.from_json(doc["user"]),
            source_host=EntityContext.from_json(doc["source_host"]),
            target_host=EntityContext.from_json(doc["target_host"]) if doc.get("target_host") else None,
            historical_baseline=doc["historical_baseline"],
            event_summary=doc["event_summary"],
            event_type=doc["event_type"],
            flags=tuple(doc["flags"]),
            severity=int(doc["severity"]),
            outcome=doc["outcome"],
            created_at=int(doc["created_at"]),
            knowledge_version=int(doc["knowledge_version"]),
            alerts=tuple(NormalizedAlert.from_json(a) for a in doc.get("alerts", [])),
        )


class IncidentCounter:
    """Monotone per-run incident numbering: INC-<label>-NNN."""

    def __init__(self, label: str = "RUN", start: int = 1):
        self.label = label
        self._next = start

    def next_id(self) -> str:
        value = f"INC-{self.label}-{self._next:03d}"
        self._next += 1
        return value


def _payload_orientation(alert: NormalizedAlert) -> str | None:
    payload = alert.payload
    if alert.source_system == "ingest":
        events = payload.get("triggering_events") or []
        if events:
            return events[-1].get("orientation")
    if alert.source_system == "siem":
        event_type = str(payload.get("event_type", "")).lower()
        if "tgt" in event_type:
            return "TGT"
    if alert.canonical_event_type == "auth.tgt_request":
        return "TGT"
    return None


def _summarize(alert: NormalizedAlert) -> str:
    orientation = _payload_orientation(alert)
    if orientation == "TGT":
        return f"Kerberos TGT Request ({alert.outcome})"
    names = {
        "auth.first_time_host_access": "First-time host access",
        "auth.repeated_failure": "Repeated authentication failures",
        "auth.lateral_move_burst": "Short-interval lateral movement",
        "auth.cross_domain": "Cross-domain authentication",
        "auth.geo_change": "Geolocation change",
        "auth.cross_tier": "Cross-tier access",
        "auth.tgt_request": "Kerberos TGT Request",
        "cred.dumping": "Credential dumping indicators",
        "proc.suspicious_powershell": "Suspicious PowerShell activity",
    }
    label = names.get(alert.canonical_event_type, alert.canonical_event_type)
    return f"{label} ({alert.outcome})"


def enrich(
    cluster: AlertCluster,
    store: KnowledgeStore,
    baseline: Baseline,
    counter: IncidentCounter | None = None,
    config: PerceptionConfig | None = None,
) -> IncidentObject:
    """Build an enriched incident from a cluster against one graph version.

    Unresolvable principals or hosts flag the incident ``unknown-entity``
    instead of failing; a store outage raises a retryable error.
    """
    cfg = config or PerceptionConfig()
    counter = counter or IncidentCounter(cfg.incident_source_label)
    try:
        graph = store.graph
    except Exception as exc:  # pragma: no cover - defensive: store handle broken
        raise EnrichmentUnavailableError(str(exc)) from exc

    rep = cluster.representative
    flags: set[str] = set()

    def entity_context(entity_id: str | None, want_tier: bool) -> EntityContext | None:
        if entity_id is None:
            return None
        plain = entity_id.split("@", 1)[0]
        node_id = entity_id if graph.has_node(entity_id) else plain
        if not graph.has_node(node_id):
            flags.add("unknown-entity")
            return EntityContext(id=entity_id, known=False)
        node = graph.nodes[node_id]
        tier = None
        if want_tier and node.kind is NodeKind.USER:
            tier = privilege_tier(graph, node_id)
        return EntityContext(
            id=node_id,
            role=node.attr("role"),
            criticality=node.criticality if node.kind in (NodeKind.HOST, NodeKind.SERVICE) else None,
            privilege_tier=tier,
        )

    user_ctx = entity_context(rep.principal, want_tier=True)
    assert user_ctx is not None
    source_ctx = entity_context(rep.source_host, want_tier=False)
    assert source_ctx is not None
    target_ctx = entity_context(rep.dest_host, want_tier=False)

    # Baseline note keyed to the representative destination.
    principal_key = rep.principal
    seen = baseline.seen(principal_key) | baseline.seen(user_ctx.id)
    first_access = rep.dest_host is not None and rep.dest_host not in seen
    if rep.dest_host is None:
        baseline_note = "No destination host on record for this event"
    elif first_access:
        baseline_note = f"No prior access to {rep.dest_host}"
    else:
        baseline_note = f"Prior access to {rep.dest_host} on record"

    for alert in cluster.members:
        flag = _ALERT_KIND_FLAGS.get(_kind_for(alert))
        if flag:
            flags.add(flag)

    if _payload_orientation(rep) == "TGT" and first_access:
        flags.add("unusual-TGT-request")
    if (
        target_ctx is not None
        and target_ctx.known
        and target_ctx.criticality is not None
        and target_ctx.criticality >= cfg.cross_tier_criticality
        and user_ctx.privilege_tier is not None
        and user_ctx.privilege_tier >= cfg.cross_tier_user_tier
    ):
        flags.add("cross-tier-access")
    if user_ctx.known and graph.has_node(user_ctx.id):
        if graph.nodes[user_ctx.id].attr("deviation_flagged") == "true":
            flags.add("deviation-flagged")

    severity = max(a.severity for a in cluster.members)
    return IncidentObject(
        incident_id=counter.next_id(),
        member_alert_ids=tuple(cluster.member_ids()),
        user=user_ctx,
        source_host=source_ctx,
        target_host=target_ctx,
        historical_baseline=baseline_note,
        event_summary=_summarize(rep),
        event_type=rep.canonical_event_type,
        flags=tuple(sorted(flags)),
        severity=severity,
        outcome=rep.outcome,
        created_at=rep.timestamp,
        knowledge_version=graph.version,
        alerts=tuple(cluster.members),
    )


def _kind_for(alert: NormalizedAlert) -> AlertKind | None:
    for kind, canonical in _INGEST_EVENT_TYPES.items():
        if canonical == alert.canonical_event_type:
            return kind
    return None


def normalize_batch(
    raw_alerts: Iterable[RawAlert],
    source_schema: str = "ingest",
) -> list[NormalizedAlert]:
    return [normalize(a, source_schema) for a in raw_alerts]
