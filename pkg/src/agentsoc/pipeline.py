"""Sense-Reason-Act orchestration over alert clusters, with a run journal.

A cycle walks the fixed stage order (normalize, enrich, nce, sse, rsem,
playbook, guardrails, execute, monitor) for one alert cluster, timing
each stage. Guardrail escalation suspends the cycle in the journal as
AwaitingAnalyst; resume_cycle completes it after an analyst decision.
run_batch drives a whole event file end to end: parse, baseline, detect,
cluster, one cycle per cluster, aggregate report.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import statistics
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .config import AppConfig, load_config
from .errors import AgentSocError, EnrichmentUnavailableError, PipelineError, UnknownEntityError
from .ingest import (
    AuthEvent,
    Baseline,
    DetectionConfig,
    RawAlert,
    build_baseline,
    detect_anomalies,
    parse_auth_events,
)
from .knowledge import KnowledgeStore, canonical_json, load_snapshot, store_from_json
from .monitor import OutcomeAssessment, assess_outcome, emit_feedback
from .nce import GeneratorConfig, Hypothesis, LlmAdapter, generate_with_fallback
from .perception import (
    AlertCluster,
    IncidentCounter,
    IncidentObject,
    normalize,
    reduce_noise,
)
from .playbook import (
    AuditLog,
    ExecutionMode,
    ExecutionReport,
    GuardrailDecision,
    GuardrailOutcome,
    Playbook,
    PlaybookStatus,
    evaluate_guardrails,
    execute_playbook,
    synthesize_playbook,
)
from .rsem import RankedAction, RiskWeights, propose_candidates, rank_actions
from .sse import FeasibilityVerdict, validate_all

logger = logging.getLogger(__name__)

STAGES = ("normalize", "enrich", "nce", "sse", "rsem", "playbook", "guardrails", "execute", "monitor")

STAGE_LABELS = {
    "normalize": "Normalization",
    "enrich": "Enrichment",
    "nce": "NCE",
    "sse": "SSE",
    "rsem": "RSEM",
    "playbook": "Playbook",
    "guardrails": "Guardrails",
    "execute": "Execute",
    "monitor": "Monitor",
}

# Keys stripped when comparing runs for determinism: wall-clock only.
TIMING_KEYS = frozenset({"stage_timings", "timings", "started_at", "ended_at", "elapsed_ms"})


class CycleStatus:
    COMPLETED = "completed"
    AWAITING_ANALYST = "awaiting_analyst"
    FAILED = "failed"


@dataclass
class CycleResult:
    cycle_id: str
    status: str
    incident: IncidentObject | None = None
    hypotheses: list[Hypothesis] = field(default_factory=list)
    verdicts: list[FeasibilityVerdict] = field(default_factory=list)
    ranked: list[RankedAction] = field(default_factory=list)
    playbook: Playbook | None = None
    guardrail: GuardrailDecision | None = None
    execution: ExecutionReport | None = None
    assessment: OutcomeAssessment | None = None
    generator_used: str = "builtin"
    mode: str = ExecutionMode.DRY_RUN.value
    stage_timings: list[tuple[str, int]] = field(default_factory=list)  # (stage, microseconds)
    error: str = ""
    failed_stage: str = ""

    def to_json(self) -> dict:
        return {
            "cycle_id": self.cycle_id,
            "status": self.status,
            "incident": self.incident.to_json() if self.incident else None,
            "hypotheses": [h.to_json() for h in self.hypotheses],
            "verdicts": [v.to_json() for v in self.verdicts],
            "ranked": [r.to_json() for r in self.ranked],
            "playbook": self.playbook.to_json() if self.playbook else None,
            "guardrail": self.guardrail.to_json() if self.guardrail else None,
            "execution": self.execution.to_json() if self.execution else None,
            "assessment": self.assessment.to_json() if self.assessment else None,
            "generator_used": self.generator_used,
            "mode": self.mode,
            "stage_timings": [[s, us] for s, us in self.stage_timings],
            "error": self.error,
            "failed_stage": self.failed_stage,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "CycleResult":
        return cls(
            cycle_id=doc["cycle_id"],
            status=doc["status"],
            incident=IncidentObject.from_json(doc["incident"]) if doc.get("incident") else None,
            hypotheses=[Hypothesis.from_json(h) for h in doc.get("hypotheses", [])],
            verdicts=[FeasibilityVerdict.from_json(v) for v in doc.get("verdicts", [])],
            ranked=[RankedAction.from_json(r) for r in doc.get("ranked", [])],
            playbook=Playbook.from_json(doc["playbook"]) if doc.get("playbook") else None,
            guardrail=GuardrailDecision.from_json(doc["guardrail"]) if doc.get("guardrail") else None,
            execution=ExecutionReport.from_json(doc["execution"]) if doc.get("execution") else None,
            assessment=OutcomeAssessment.from_json(doc["assessment"]) if doc.get("assessment") else None,
            generator_used=doc.get("generator_used", "builtin"),
            mode=doc.get("mode", ExecutionMode.DRY_RUN.value),
            stage_timings=[(s, int(us)) for s, us in doc.get("stage_timings", [])],
            error=doc.get("error", ""),
            failed_stage=doc.get("failed_stage", ""),
        )


def strip_timings(doc):
    """Recursively drop wall-clock fields for byte-stable comparison."""
    if isinstance(doc, dict):
        return {k: strip_timings(v) for k, v in doc.items() if k not in TIMING_KEYS}
    if isinstance(doc, list):
        return [strip_timings(v) for v in doc]
    return doc


def canonical_cycle_bytes(result: CycleResult) -> str:
    return json.dumps(strip_timings(result.to_json()), sort_keys=True)


# ---------------------------------------------------------------------------
# Run journal
# ---------------------------------------------------------------------------

class RunJournal:
    """Durable per-run artifact store: cycles, report, working snapshot."""

    def __init__(self, run_dir: str | Path, create: bool = False):
        self.run_dir = Path(run_dir)
        if create:
            (self.run_dir / "cycles").mkdir(parents=True, exist_ok=True)
        if not self.run_dir.is_dir():
            raise PipelineError(f"run directory does not exist: {self.run_dir}")
        self._lock = threading.Lock()

    @property
    def cycles_dir(self) -> Path:
        return self.run_dir / "cycles"

    @property
    def audit_path(self) -> Path:
        return self.run_dir / "audit.jsonl"

    @property
    def deltas_path(self) -> Path:
        return self.run_dir / "deltas.jsonl"

    def save_cycle(self, result: CycleResult) -> None:
        self.cycles_dir.mkdir(parents=True, exist_ok=True)
        path = self.cycles_dir / f"{result.cycle_id}.json"
        path.write_text(canonical_json(result.to_json()), encoding="utf-8")

    def load_cycle(self, cycle_id: str) -> CycleResult:
        path = self.cycles_dir / f"{cycle_id}.json"
        if not path.exists():
            raise UnknownEntityError(f"unknown cycle id {cycle_id!r}")
        return CycleResult.from_json(json.loads(path.read_text(encoding="utf-8")))

    def list_cycle_ids(self) -> list[str]:
        if not self.cycles_dir.is_dir():
            return []
        return sorted(p.stem for p in self.cycles_dir.glob("*.json"))

    def save_report(self, report: dict) -> None:
        (self.run_dir / "report.json").write_text(canonical_json(report), encoding="utf-8")

    def load_report(self) -> dict:
        path = self.run_dir / "report.json"
        if not path.exists():
            raise PipelineError(f"no report in {self.run_dir}")
        return json.loads(path.read_text(encoding="utf-8"))

    def save_store(self, store: KnowledgeStore) -> None:
        store.save(self.run_dir / "snapshot.json")

    def load_store(self) -> KnowledgeStore:
        path = self.run_dir / "snapshot.json"
        if not path.exists():
            raise PipelineError(f"no snapshot in {self.run_dir}")
        return load_snapshot(path, delta_log_path=self.deltas_path)

    def save_meta(self, meta: dict) -> None:
        (self.run_dir / "meta.json").write_text(canonical_json(meta), encoding="utf-8")

    def load_meta(self) -> dict:
        path = self.run_dir / "meta.json"
        if not path.exists():
            return {}
        return json.loads(path.read_text(encoding="utf-8"))

    # Approval records: decision per cycle, immutable once made.
    def approvals(self) -> dict:
        path = self.run_dir / "approvals.json"
        if not path.exists():
            return {}
        return json.loads(path.read_text(encoding="utf-8"))

    def record_decision(self, cycle_id: str, decision: str, analyst: str, decided_at: float) -> dict:
        with self._lock:
            records = self.approvals()
            if cycle_id in records and records[cycle_id].get("decision"):
                raise PipelineError(f"cycle {cycle_id} already decided")
            records[cycle_id] = {
                "cycle_id": cycle_id,
                "decision": decision,
                "decided_by": analyst,
                "decided_at": decided_at,
            }
            (self.run_dir / "approvals.json").write_text(canonical_json(records), encoding="utf-8")
            return records[cycle_id]


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

class _StageClock:
    def __init__(self) -> None:
        self.timings: list[tuple[str, int]] = []

    def run(self, stage: str, fn):
        start = time.perf_counter_ns()
        try:
            return fn()
        except AgentSocError as exc:
            raise PipelineError(f"{stage}: {exc}", stage=stage) from exc
        finally:
            self.timings.append((stage, (time.perf_counter_ns() - start) // 1000))


class Pipeline:
    """Holds the shared context one run needs: store, config, data tables."""

    def __init__(
        self,
        store: KnowledgeStore,
        config: AppConfig,
        gen_config: GeneratorConfig | None = None,
        calibration: Mapping[str, Mapping] | None = None,
        journal: RunJournal | None = None,
        adapter: LlmAdapter | None = None,
        audit_log: AuditLog | None = None,
    ):
        self.store = store
        self.config = config
        self.gen_config = gen_config or GeneratorConfig.from_nce_config(config.nce)
        self.calibration = calibration
        self.journal = journal
        self.adapter = adapter
        self.audit_log = audit_log or AuditLog(journal.audit_path if journal else None)

    # -- single cycle --------------------------------------------------------

    def run_cycle(
        self,
        raw_alerts: Sequence[RawAlert],
        mode: ExecutionMode = ExecutionMode.DRY_RUN,
        baseline: Baseline | None = None,
        incident_counter: IncidentCounter | None = None,
        post_events: Sequence[AuthEvent] = (),
    ) -> CycleResult:
        if not raw_alerts:
            raise PipelineError("no alerts", stage="normalize")
        baseline = baseline or Baseline()
        counter = incident_counter or IncidentCounter(self.config.perception.incident_source_label)
        clock = _StageClock()

        normalized = clock.run("normalize", lambda: [normalize(a, "ingest") for a in raw_alerts])

        def _enrich():
            clusters, _ = reduce_noise(
                normalized,
                window_s=self.config.perception.dedup_bucket_s,
                notable_severity=self.config.perception.notable_severity,
            )
            if len(clusters) != 1:
                raise PipelineError(
                    f"cycle input spans {len(clusters)} clusters; one expected", stage="enrich"
                )
            attempts = 0
            while True:
                try:
                    return enrich_cluster(
                        clusters[0], self.store, baseline, counter, self.config.perception
                    )
                except EnrichmentUnavailableError:
                    attempts += 1
                    if attempts > self.config.pipeline.enrich_retry_limit:
                        raise

        incident = clock.run("enrich", _enrich)

        def _nce():
            return generate_with_fallback(incident, self.store, self.gen_config, self.adapter)

        hypotheses, generator_used = clock.run("nce", _nce)

        graph = self.store.graph
        verdicts = clock.run(
            "sse", lambda: validate_all(hypotheses, incident, graph, self.store.techniques)
        )

        def _rsem():
            candidates = propose_candidates(
                incident,
                verdicts,
                self.store,
                calibration=self.calibration,
                default_impact=self.config.rsem.default_impact,
            )
            return rank_actions(candidates, RiskWeights.from_config(self.config.rsem))

        ranked = clock.run("rsem", _rsem)

        pb = clock.run(
            "playbook",
            lambda: synthesize_playbook(
                incident,
                verdicts,
                ranked,
                self.store.policies,
                graph,
                impact_params=self.store.impact_params,
                default_impact=self.config.rsem.default_impact,
            ),
        )

        decision = clock.run(
            "guardrails",
            lambda: evaluate_guardrails(
                pb, self.store.policies, self.config.playbook.approval_threshold, graph
            ),
        )

        result = CycleResult(
            cycle_id=incident.incident_id,
            status=CycleStatus.COMPLETED,
            incident=incident,
            hypotheses=list(hypotheses),
            verdicts=list(verdicts),
            ranked=list(ranked),
            playbook=pb,
            guardrail=decision,
            generator_used=generator_used,
            mode=mode.value,
        )

        if decision.outcome is GuardrailOutcome.REQUIRES_ANALYST:
            pb.transition(PlaybookStatus.AWAITING_ANALYST)
            result.status = CycleStatus.AWAITING_ANALYST
            result.stage_timings = clock.timings
            self._persist(result)
            return result

        if decision.outcome is GuardrailOutcome.REJECTED:
            pb.transition(PlaybookStatus.REJECTED)
            result = self._finish_rejected(result, clock, mode)
            result.stage_timings = clock.timings
            self._persist(result)
            return result

        pb.transition(PlaybookStatus.APPROVED)
        report = clock.run(
            "execute", lambda: execute_playbook(pb, mode, self.store, audit_log=self.audit_log)
        )
        result.execution = report

        def _monitor():
            if mode is ExecutionMode.LIVE:
                assessment = assess_outcome(report, post_events, self.store, self.config.monitor)
                emit_feedback(assessment, self.store)
                return assessment
            return None

        result.assessment = clock.run("monitor", _monitor)
        result.stage_timings = clock.timings
        self._persist(result)
        return result

    def _finish_rejected(self, result: CycleResult, clock: _StageClock, mode: ExecutionMode) -> CycleResult:
        """Policy rejection still leaves a monitoring fallback on record."""
        incident = result.incident
        assert incident is not None
        fallback = monitor_fallback_playbook(incident)
        fallback.transition(PlaybookStatus.APPROVED)
        report = clock.run(
            "execute", lambda: execute_playbook(fallback, mode, self.store, audit_log=self.audit_log)
        )
        result.execution = report
        clock.run("monitor", lambda: None)
        return result

    def _persist(self, result: CycleResult) -> None:
        if self.journal is not None:
            self.journal.save_cycle(result)

    # -- resume ---------------------------------------------------------------

    def resume_cycle(self, cycle_id: str, decision: str, analyst: str = "") -> CycleResult:
        """Complete a suspended cycle after an analyst decision."""
        if decision not in ("Approved", "Rejected"):
            raise PipelineError(f"decision must be Approved or Rejected, got {decision!r}")
        if self.journal is None:
            raise PipelineError("resume requires a run journal")
        result = self.journal.load_cycle(cycle_id)
        if result.status != CycleStatus.AWAITING_ANALYST:
            raise PipelineError(f"cycle {cycle_id} is not awaiting approval (status {result.status})")
        pb = result.playbook
        assert pb is not None and result.incident is not None
        mode = ExecutionMode(result.mode)
        clock = _StageClock()

        if decision == "Approved":
            pb.transition(PlaybookStatus.APPROVED)
            report = clock.run(
                "execute", lambda: execute_playbook(pb, mode, self.store, audit_log=self.audit_log)
            )
            result.execution = report

            def _monitor():
                if mode is ExecutionMode.LIVE:
                    assessment = assess_outcome(report, (), self.store, self.config.monitor)
                    emit_feedback(assessment, self.store)
                    return assessment
                return None

            result.assessment = clock.run("monitor", _monitor)
        else:
            pb.transition(PlaybookStatus.REJECTED)
            result = self._finish_rejected(result, clock, mode)

        result.status = CycleStatus.COMPLETED
        result.stage_timings = result.stage_timings + clock.timings
        self._persist(result)
        if self.journal is not None:
            self.journal.save_store(self.store)
        return result


def enrich_cluster(cluster: AlertCluster, store, baseline, counter, perception_cfg) -> IncidentObject:
    from .perception import enrich

    return enrich(cluster, store, baseline, counter, perception_cfg)


def monitor_fallback_playbook(incident: IncidentObject) -> Playbook:
    from .playbook import PlaybookStep

    return Playbook(
        playbook_id=f"PB-{incident.incident_id}-fallback",
        incident_id=incident.incident_id,
        steps=[
            PlaybookStep(
                primitive="MONITOR_ONLY",
                target=incident.source_host.id,
                provenance="fallback:analyst-rejected",
                impact=0.0,
            )
        ],
        projected_impact=0.0,
        created_at=incident.created_at,
        status=PlaybookStatus.DRAFT,
    )


# ---------------------------------------------------------------------------
# Batch
# ---------------------------------------------------------------------------

@dataclass
class BatchReport:
    cycles: list[CycleResult]
    raw_alert_count: int
    cluster_count: int
    suppressed_count: int
    reduction_ratio: float
    skipped_lines: int
    event_count: int
    baseline_event_count: int
    failures: list[dict]
    stage_stats: dict[str, dict[str, float]]  # stage -> {min, median, p95, max} in ms

    def to_json(self) -> dict:
        return {
            "cycles": [c.to_json() for c in self.cycles],
            "raw_alert_count": self.raw_alert_count,
            "cluster_count": self.cluster_count,
            "suppressed_count": self.suppressed_count,
            "reduction_ratio": self.reduction_ratio,
            "skipped_lines": self.skipped_lines,
            "event_count": self.event_count,
            "baseline_event_count": self.baseline_event_count,
            "failures": self.failures,
            "timings": self.stage_stats,
        }


def _percentile(values: list[float], q: float) -> float:
    if not values:
        return 0.0
    ordered = sorted(values)
    index = max(0, min(len(ordered) - 1, int(-(-q * len(ordered) // 1)) - 1))
    return ordered[index]


def stage_statistics(cycles: Sequence[CycleResult]) -> dict[str, dict[str, float]]:
    per_stage: dict[str, list[float]] = {s: [] for s in STAGES}
    for cycle in cycles:
        for stage, us in cycle.stage_timings:
            per_stage.setdefault(stage, []).append(us / 1000.0)
    out: dict[str, dict[str, float]] = {}
    for stage in STAGES:
        values = per_stage.get(stage, [])
        if not values:
            out[stage] = {"min": 0.0, "median": 0.0, "p95": 0.0, "max": 0.0}
            continue
        out[stage] = {
            "min": min(values),
            "median": statistics.median(values),
            "p95": _percentile(values, 0.95),
            "max": max(values),
        }
    return out


def render_report_table(report: dict) -> str:
    """Text table mirroring the per-stage processing-time breakdown."""
    lines = [
        f"{'Stage':<14} {'median ms':>10} {'p95 ms':>10} {'max ms':>10}",
        "-" * 48,
    ]
    for stage in STAGES:
        stats = report.get("timings", {}).get(stage, {})
        lines.append(
            f"{STAGE_LABELS[stage]:<14} {stats.get('median', 0.0):>10.3f} "
            f"{stats.get('p95', 0.0):>10.3f} {stats.get('max', 0.0):>10.3f}"
        )
    lines.append("-" * 48)
    lines.append(
        f"cycles: {len(report.get('cycles', []))}  raw alerts: {report.get('raw_alert_count', 0)}  "
        f"clusters: {report.get('cluster_count', 0)}  reduction ratio: {report.get('reduction_ratio', 0.0):.3f}"
    )
    return "\n".join(lines) + "\n"


def run_batch(
    events_path: str | Path,
    snapshot_path: str | Path,
    config: AppConfig,
    mode: ExecutionMode = ExecutionMode.DRY_RUN,
    out_dir: str | Path | None = None,
    gen_config: GeneratorConfig | None = None,
    calibration: Mapping[str, Mapping] | None = None,
    workers: int | None = None,
) -> BatchReport:
    """Ingest -> baseline -> detect -> cluster -> one cycle per cluster."""
    events_file = Path(events_path)
    if not events_file.exists():
        raise PipelineError(f"events file not found: {events_file}")
    journal = RunJournal(out_dir, create=True) if out_dir else None
    store = load_snapshot(snapshot_path, delta_log_path=journal.deltas_path if journal else None)

    errors: list = []
    events = parse_auth_events(
        events_file.read_text(encoding="utf-8"),
        strict=config.ingest.strict_parse,
        error_sink=errors,
    )
    events = sorted(events, key=lambda e: e.time)
    split = int(len(events) * config.ingest.baseline_fraction)
    baseline_events, eval_events = events[:split], events[split:]
    baseline = build_baseline(baseline_events, window_s=config.ingest.failure_window_s)
    detection = DetectionConfig.from_ingest_config(config.ingest)
    alerts = detect_anomalies(eval_events, baseline, detection)

    normalized = [normalize(a, "ingest") for a in alerts]
    by_id = {a.alert_id: raw for a, raw in zip(normalized, alerts)}
    clusters, suppressed = reduce_noise(
        normalized,
        window_s=config.perception.dedup_bucket_s,
        notable_severity=config.perception.notable_severity,
    )

    pipeline = Pipeline(
        store,
        config,
        gen_config=gen_config,
        calibration=calibration,
        journal=journal,
    )

    label = config.perception.incident_source_label
    results: list[CycleResult | None] = [None] * len(clusters)
    failures: list[dict] = []

    def run_one(index: int, cluster: AlertCluster) -> CycleResult:
        raw_members = [by_id[aid] for aid in cluster.member_ids() if aid in by_id]
        counter = IncidentCounter(label, start=index + 1)
        return pipeline.run_cycle(raw_members, mode=mode, baseline=baseline, incident_counter=counter)

    worker_count = workers if workers is not None else config.pipeline.workers
    if worker_count == 0:
        import os

        worker_count = os.cpu_count() or 1
    worker_count = max(1, min(worker_count, max(len(clusters), 1)))

    if worker_count == 1 or len(clusters) <= 1:
        for i, cluster in enumerate(clusters):
            try:
                results[i] = run_one(i, cluster)
            except AgentSocError as exc:
                failures.append({"cluster_index": i, "error": str(exc)})
    else:
        with ThreadPoolExecutor(max_workers=worker_count) as pool:
            futures = {pool.submit(run_one, i, c): i for i, c in enumerate(clusters)}
            for future, i in futures.items():
                try:
                    results[i] = future.result()
                except AgentSocError as exc:
                    failures.append({"cluster_index": i, "error": str(exc)})
    cycles = [r for r in results if r is not None]

    report = BatchReport(
        cycles=cycles,
        raw_alert_count=len(alerts),
        cluster_count=len(clusters),
        suppressed_count=len(suppressed),
        reduction_ratio=(len(clusters) / len(alerts)) if alerts else 0.0,
        skipped_lines=len(errors),
        event_count=len(events),
        baseline_event_count=len(baseline_events),
        failures=sorted(failures, key=lambda f: f["cluster_index"]),
        stage_stats=stage_statistics(cycles),
    )

    if journal is not None:
        doc = report.to_json()
        journal.save_report(doc)
        (journal.run_dir / "report.txt").write_text(render_report_table(doc), encoding="utf-8")
        journal.save_store(store)
        journal.save_meta(
            {
                "mode": mode.value,
                "label": label,
                "events_path": str(events_file),
                "snapshot_path": str(snapshot_path),
                "config": dataclasses.asdict(config),
                "nce_tables": {
                    "feature_weights": pipeline.gen_config.feature_weights,
                    "seed_map": pipeline.gen_config.seed_map,
                    "technique_evidence": pipeline.gen_config.technique_evidence,
                    "benign_technique": pipeline.gen_config.benign_technique,
                },
                "calibration": dict(calibration) if calibration else None,
            }
        )
    return report


def pipeline_from_journal(journal: RunJournal) -> Pipeline:
    """Rebuild the run context (store, config, tables) from a journal."""
    meta = journal.load_meta()
    overrides = meta.get("config", {})
    # Recorded config is authoritative for the run; ignore the environment.
    config = load_config(None, overrides=overrides, env={})
    store = journal.load_store()
    tables = meta.get("nce_tables") or None
    gen_config = GeneratorConfig.from_nce_config(config.nce, tables)
    return Pipeline(
        store,
        config,
        gen_config=gen_config,
        calibration=meta.get("calibration"),
        journal=journal,
    )
