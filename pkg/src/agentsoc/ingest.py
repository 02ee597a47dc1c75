"""Authentication event ingestion: parsing, baselines, anomaly rules.

Input is the comma-separated 9-field auth layout::

    time,source_user@domain,dest_user@domain,source_host,dest_host,
    auth_type,logon_type,auth_orientation,outcome

``?`` marks an unknown token; outcome is ``Success`` or ``Fail``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Mapping

from .config import IngestConfig
from .errors import ConfigError, ParseError

logger = logging.getLogger(__name__)

UNKNOWN = "?"

_OUTCOME_TOKENS = {"Success": "Success", "Fail": "Failure", "Failure": "Failure"}


@dataclass(frozen=True)
class AuthEvent:
    """One authentication event in dataset-relative seconds."""

    time: int
    source_user: str
    dest_user: str
    source_host: str
    dest_host: str
    auth_type: str
    logon_type: str
    orientation: str
    outcome: str  # "Success" | "Failure"
    line_no: int = 0
    location: str | None = None  # optional annotation; never set by the parser

    def __post_init__(self) -> None:
        if self.time < 0:
            raise ValueError("event time must be >= 0")
        if not self.source_user or not self.source_host:
            raise ValueError("source_user and source_host must be non-empty")
        if self.outcome not in ("Success", "Failure"):
            raise ValueError(f"outcome must be Success or Failure, got {self.outcome!r}")

    @property
    def source_domain(self) -> str | None:
        return _domain_of(self.source_user)

    @property
    def dest_domain(self) -> str | None:
        return _domain_of(self.dest_user)

    def to_line(self) -> str:
        outcome = "Fail" if self.outcome == "Failure" else "Success"
        return ",".join(
            (
                str(self.time),
                self.source_user,
                self.dest_user,
                self.source_host,
                self.dest_host,
                self.auth_type,
                self.logon_type,
                self.orientation,
                outcome,
            )
        )

    def to_json(self) -> dict:
        out = {
            "time": self.time,
            "source_user": self.source_user,
            "dest_user": self.dest_user,
            "source_host": self.source_host,
            "dest_host": self.dest_host,
            "auth_type": self.auth_type,
            "logon_type": self.logon_type,
            "orientation": self.orientation,
            "outcome": self.outcome,
            "line_no": self.line_no,
        }
        if self.location is not None:
            out["location"] = self.location
        return out

    @classmethod
    def from_json(cls, doc: Mapping) -> "AuthEvent":
        return cls(
            time=int(doc["time"]),
            source_user=doc["source_user"],
            dest_user=doc["dest_user"],
            source_host=doc["source_host"],
            dest_host=doc["dest_host"],
            auth_type=doc["auth_type"],
            logon_type=doc["logon_type"],
            orientation=doc["orientation"],
            outcome=doc["outcome"],
            line_no=int(doc.get("line_no", 0)),
            location=doc.get("location"),
        )


def _domain_of(identity: str) -> str | None:
    if "@" not in identity:
        return None
    domain = identity.rsplit("@", 1)[1]
    return domain if domain and domain != UNKNOWN else None


def normalize_line(line: str) -> str:
    """Canonical form of a well-formed line: stripped fields, Fail spelling."""
    parts = [p.strip() for p in line.strip().split(",")]
    if parts[-1] == "Failure":
        parts[-1] = "Fail"
    return ",".join(parts)


def parse_auth_line(line: str, line_no: int = 0) -> AuthEvent:
    """Parse one 9-field line; raises ParseError on malformed input."""
    parts = [p.strip() for p in line.strip().split(",")]
    if len(parts) != 9:
        raise ParseError(f"expected 9 fields, got {len(parts)}", line_no=line_no)
    raw_time, src_user, dst_user, src_host, dst_host, auth_type, logon_type, orientation, outcome = parts
    try:
        time = int(raw_time)
    except ValueError:
        raise ParseError(f"non-integer time {raw_time!r}", line_no=line_no) from None
    if outcome not in _OUTCOME_TOKENS:
        raise ParseError(f"unknown outcome token {outcome!r}", line_no=line_no)
    try:
        return AuthEvent(
            time=time,
            source_user=src_user,
            dest_user=dst_user,
            source_host=src_host,
            dest_host=dst_host,
            auth_type=auth_type,
            logon_type=logon_type,
            orientation=orientation,
            outcome=_OUTCOME_TOKENS[outcome],
            line_no=line_no,
        )
    except ValueError as exc:
        raise ParseError(str(exc), line_no=line_no) from None


def parse_auth_events(
    stream: str | Iterable[str],
    *,
    strict: bool = True,
    error_sink: list[ParseError] | None = None,
) -> list[AuthEvent]:
    """Parse a line-oriented auth stream in input order.

    ``strict=True`` aborts on the first malformed line; otherwise malformed
    lines are logged, recorded in ``error_sink`` when given, and skipped.
    """
    lines: Iterator[str]
    if isinstance(stream, str):
        lines = iter(stream.splitlines())
    else:
        lines = iter(stream)
    events: list[AuthEvent] = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            events.append(parse_auth_line(line, line_no=line_no))
        except ParseError as exc:
            if strict:
                raise
            logger.warning("skipping line %d: %s", line_no, exc)
            if error_sink is not None:
                error_sink.append(exc)
    return events


# ---------------------------------------------------------------------------
# Baseline
# ---------------------------------------------------------------------------

@dataclass
class Baseline:
    """Per-user behavioral history built from past events."""

    window_s: int = 300
    seen_hosts: dict[str, set[str]] = field(default_factory=dict)
    failure_times: dict[str, list[int]] = field(default_factory=dict)
    last_event: dict[str, tuple[int, str]] = field(default_factory=dict)  # user -> (time, source_host)
    first_seen: dict[tuple[str, str], int] = field(default_factory=dict)  # (user, host) -> time

    def seen(self, user: str) -> set[str]:
        return self.seen_hosts.get(user, set())

    def record(self, event: AuthEvent) -> None:
        user = event.source_user
        if event.outcome == "Success" and event.dest_host and event.dest_host != UNKNOWN:
            self.seen_hosts.setdefault(user, set()).add(event.dest_host)
            self.first_seen.setdefault((user, event.dest_host), event.time)
        if event.outcome == "Failure":
            times = self.failure_times.setdefault(user, [])
            times.append(event.time)
            cutoff = event.time - self.window_s
            self.failure_times[user] = [t for t in times if t > cutoff]
        prior = self.last_event.get(user)
        if prior is None or event.time >= prior[0]:
            self.last_event[user] = (event.time, event.source_host)

    def merge(self, other: "Baseline") -> "Baseline":
        """Associative merge: set union, max-recency counters, min first-seen."""
        merged = Baseline(window_s=max(self.window_s, other.window_s))
        for src in (self, other):
            for user, hosts in src.seen_hosts.items():
                merged.seen_hosts.setdefault(user, set()).update(hosts)
            for key, t in src.first_seen.items():
                merged.first_seen[key] = min(merged.first_seen.get(key, t), t)
            for user, last in src.last_event.items():
                if user not in merged.last_event or last > merged.last_event[user]:
                    merged.last_event[user] = last
        users = set(self.failure_times) | set(other.failure_times)
        for user in users:
            times = sorted(set(self.failure_times.get(user, [])) | set(other.failure_times.get(user, [])))
            if times:
                cutoff = times[-1] - merged.window_s
                merged.failure_times[user] = [t for t in times if t > cutoff]
        return merged


def build_baseline(events: Iterable[AuthEvent], *, window_s: int = 300) -> Baseline:
    """Fold time-ordered events into a baseline (stable-sorts if unordered)."""
    baseline = Baseline(window_s=window_s)
    for event in sorted(events, key=lambda e: e.time):
        baseline.record(event)
    return baseline


# ---------------------------------------------------------------------------
# Anomaly detection
# ---------------------------------------------------------------------------

class AlertKind(str, Enum):
    CROSS_DOMAIN_ACCESS = "CrossDomainAccess"
    REPEATED_FAILURE = "RepeatedFailure"
    GEO_CHANGE = "GeoChange"
    SHORT_INTERVAL_LATERAL_MOVE = "ShortIntervalLateralMove"
    FIRST_TIME_HOST_ACCESS = "FirstTimeHostAccess"
    CROSS_TIER_ACCESS = "CrossTierAccess"


@dataclass(frozen=True)
class RawAlert:
    alert_id: str
    kind: AlertKind
    triggering_events: tuple[AuthEvent, ...]
    severity: int
    detected_at: int

    def __post_init__(self) -> None:
        if not self.triggering_events:
            raise ValueError("triggering_events must be non-empty")
        if not 1 <= self.severity <= 10:
            raise ValueError("severity must be in [1, 10]")

    def to_json(self) -> dict:
        return {
            "alert_id": self.alert_id,
            "kind": self.kind.value,
            "severity": self.severity,
            "detected_at": self.detected_at,
            "triggering_events": [e.to_json() for e in self.triggering_events],
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "RawAlert":
        return cls(
            alert_id=doc["alert_id"],
            kind=AlertKind(doc["kind"]),
            triggering_events=tuple(AuthEvent.from_json(e) for e in doc["triggering_events"]),
            severity=int(doc["severity"]),
            detected_at=int(doc["detected_at"]),
        )


def serialize_alerts(alerts: Iterable[RawAlert]) -> str:
    """One RawAlert per line, stable field order."""
    return "\n".join(json.dumps(a.to_json(), sort_keys=False) for a in alerts)


@dataclass(frozen=True)
class DetectionConfig:
    """Thresholds for the anomaly rules; see IngestConfig for file keys."""

    failure_count: int = 5
    failure_window_s: int = 300
    lateral_hosts: int = 3
    lateral_window_s: int = 300
    severity: Mapping[AlertKind, int] = field(
        default_factory=lambda: {
            AlertKind.FIRST_TIME_HOST_ACCESS: 6,
            AlertKind.CROSS_TIER_ACCESS: 8,
            AlertKind.REPEATED_FAILURE: 5,
            AlertKind.SHORT_INTERVAL_LATERAL_MOVE: 7,
            AlertKind.CROSS_DOMAIN_ACCESS: 5,
            AlertKind.GEO_CHANGE: 6,
        }
    )
    # Optional context maps; the cross-tier rule is evaluated only when both
    # are supplied (the plain auth stream carries no tier/criticality facts).
    host_criticality: Mapping[str, int] = field(default_factory=dict)
    user_tier: Mapping[str, int] = field(default_factory=dict)
    cross_tier_criticality: int = 8
    cross_tier_user_tier: int = 2

    @classmethod
    def from_ingest_config(cls, cfg: IngestConfig, **extra) -> "DetectionConfig":
        severity = {
            AlertKind.FIRST_TIME_HOST_ACCESS: cfg.severity_first_time_host_access,
            AlertKind.CROSS_TIER_ACCESS: cfg.severity_cross_tier_access,
            AlertKind.REPEATED_FAILURE: cfg.severity_repeated_failure,
            AlertKind.SHORT_INTERVAL_LATERAL_MOVE: cfg.severity_short_interval_lateral_move,
            AlertKind.CROSS_DOMAIN_ACCESS: cfg.severity_cross_domain_access,
            AlertKind.GEO_CHANGE: cfg.severity_geo_change,
        }
        return cls(
            failure_count=cfg.failure_count,
            failure_window_s=cfg.failure_window_s,
            lateral_hosts=cfg.lateral_hosts,
            lateral_window_s=cfg.lateral_window_s,
            severity=severity,
            cross_tier_criticality=cfg.cross_tier_criticality,
            cross_tier_user_tier=cfg.cross_tier_user_tier,
            **extra,
        )

    def validate(self) -> None:
        if self.failure_count < 1:
            raise ConfigError("failure_count must be >= 1")
        if self.failure_window_s <= 0:
            raise ConfigError("failure_window_s must be > 0")
        if self.lateral_hosts < 2:
            raise ConfigError("lateral_hosts must be >= 2")
        if self.lateral_window_s <= 0:
            raise ConfigError("lateral_window_s must be > 0")
        for kind in AlertKind:
            sev = self.severity.get(kind)
            if sev is None or not 1 <= sev <= 10:
                raise ConfigError(f"severity for {kind.value} must be in [1, 10]")


# Fixed per-event rule evaluation order keeps the alert sequence deterministic.
_RULE_ORDER = (
    AlertKind.CROSS_DOMAIN_ACCESS,
    AlertKind.REPEATED_FAILURE,
    AlertKind.GEO_CHANGE,
    AlertKind.SHORT_INTERVAL_LATERAL_MOVE,
    AlertKind.FIRST_TIME_HOST_ACCESS,
    AlertKind.CROSS_TIER_ACCESS,
)


def detect_anomalies(
    events: Iterable[AuthEvent],
    baseline: Baseline,
    config: DetectionConfig,
) -> list[RawAlert]:
    """Run the anomaly rules over an evaluation window.

    The baseline must cover only events strictly preceding the window.
    Stateful rules (repeated failures, lateral-move bursts) fire on the
    rising edge: once when the threshold is first crossed, and again only
    after the sliding window drops back below it.  First-time-host access
    fires once per (user, host) as the working view of seen hosts grows.
    """
    config.validate()
    ordered = sorted(events, key=lambda e: e.time)  # stable: ties keep input order

    working_seen: dict[str, set[str]] = {}
    fail_events: dict[str, list[AuthEvent]] = {}
    fail_above: dict[str, bool] = {}
    move_events: dict[str, list[AuthEvent]] = {}
    move_above: dict[str, bool] = {}
    last_located: dict[str, AuthEvent] = {}
    cross_tier_fired: set[tuple[str, str]] = set()

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

    def seen_for(user: str) -> set[str]:
        if user not in working_seen:
            working_seen[user] = set(baseline.seen(user))
        return working_seen[user]

    for event in ordered:
        user = event.source_user
        for kind in _RULE_ORDER:
            if kind is AlertKind.CROSS_DOMAIN_ACCESS:
                src_dom, dst_dom = event.source_domain, event.dest_domain
                if src_dom and dst_dom and src_dom != dst_dom:
                    emit(kind, [event], event.time)

            elif kind is AlertKind.REPEATED_FAILURE:
                if event.outcome != "Failure":
                    continue
                if user not in fail_events:
                    # Seed from baseline so bursts straddling the boundary count.
                    fail_events[user] = [
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
                window = fail_events[user]
                window.append(event)
                cutoff = event.time - config.failure_window_s
                window[:] = [e for e in window if e.time > cutoff]
                above = len(window) >= config.failure_count
                if above and not fail_above.get(user, False):
                    emit(kind, list(window), event.time)
                fail_above[user] = above

            elif kind is AlertKind.GEO_CHANGE:
                if event.location is None:
                    continue
                prior = last_located.get(user)
                if prior is not None and prior.location != event.location:
                    emit(kind, [prior, event], event.time)
                last_located[user] = event

            elif kind is AlertKind.SHORT_INTERVAL_LATERAL_MOVE:
                if event.outcome != "Success" or event.dest_host in ("", UNKNOWN):
                    continue
                window = move_events.setdefault(user, [])
                window.append(event)
                cutoff = event.time - config.lateral_window_s
                window[:] = [e for e in window if e.time > cutoff]
                distinct = {e.dest_host for e in window}
                above = len(distinct) >= config.lateral_hosts
                if above and not move_above.get(user, False):
                    emit(kind, list(window), event.time)
                move_above[user] = above

            elif kind is AlertKind.FIRST_TIME_HOST_ACCESS:
                if event.outcome != "Success" or event.dest_host in ("", UNKNOWN):
                    continue
                seen = seen_for(user)
                if event.dest_host not in seen:
                    emit(kind, [event], event.time)
                seen.add(event.dest_host)

            elif kind is AlertKind.CROSS_TIER_ACCESS:
                if not config.host_criticality or not config.user_tier:
                    continue
                if event.outcome != "Success" or event.dest_host in ("", UNKNOWN):
                    continue
                tier = config.user_tier.get(user)
                crit = config.host_criticality.get(event.dest_host)
                if tier is None or crit is None:
                    continue
                key = (user, event.dest_host)
                if (
                    tier >= config.cross_tier_user_tier
                    and crit >= config.cross_tier_criticality
                    and key not in cross_tier_fired
                ):
                    emit(kind, [event], event.time)
                    cross_tier_fired.add(key)

    return alerts
