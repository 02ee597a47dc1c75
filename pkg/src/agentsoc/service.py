"""HTTP service over a run journal: incidents, approvals, what-if rescoring.

Wraps the same library the CLI uses; no decision logic lives here. Reads
are side-effect free against journal snapshots; the approval decision is
exactly-once and drives pipeline.resume_cycle.
"""

from __future__ import annotations

import threading
import time
from pathlib import Path

from fastapi import Depends, FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__
from .config import AppConfig
from .errors import AgentSocError, PipelineError, UnknownEntityError, ValidationError
from .pipeline import (
    CycleStatus,
    Pipeline,
    RunJournal,
    pipeline_from_journal,
    stage_statistics,
)
from .rsem import ActionCandidate, RiskWeights, rank_actions


# ---------------------------------------------------------------------------
# Wire models
# ---------------------------------------------------------------------------

class HealthResponse(BaseModel):
    status: str = "ok"
    version: str = __version__


class IncidentSummary(BaseModel):
    cycle_id: str
    status: str
    incident_id: str | None = None
    flags: list[str] = Field(default_factory=list)
    severity: int | None = None
    top_action: str | None = None
    playbook_status: str | None = None
    guardrail_outcome: str | None = None


class IncidentListResponse(BaseModel):
    total: int
    limit: int
    offset: int
    items: list[IncidentSummary]


class ApprovalItem(BaseModel):
    cycle_id: str
    playbook_summary: str
    projected_impact: float
    triggered_rules: list[str]
    requested_at: int
    decided_by: str | None = None
    decision: str | None = None
    decided_at: float | None = None


class ApprovalListResponse(BaseModel):
    items: list[ApprovalItem]


class DecisionRequest(BaseModel):
    decision: str = Field(pattern="^(Approved|Rejected)$")
    analyst: str = Field(min_length=1)


class DecisionResponse(BaseModel):
    cycle_id: str
    decision: str
    decided_by: str
    playbook_status: str
    cycle_status: str


class RescoreRequest(BaseModel):
    alpha: float
    beta: float = 0.0
    gamma: float = 0.0


class RankedActionModel(BaseModel):
    rank: int
    action_id: str
    primitive: str
    target: str
    containment: float
    business_impact: float
    execution_cost: float
    composite: float


class RescoreResponse(BaseModel):
    cycle_id: str
    original: list[RankedActionModel]
    what_if: list[RankedActionModel]
    weights: dict[str, float]


class StageStats(BaseModel):
    min: float
    median: float
    p95: float
    max: float


class MetricsResponse(BaseModel):
    cycles: int
    stages: dict[str, StageStats]


# ---------------------------------------------------------------------------
# App state
# ---------------------------------------------------------------------------

class ServiceState:
    def __init__(self, journal: RunJournal, pipeline: Pipeline, token: str = ""):
        self.journal = journal
        self.pipeline = pipeline
        self.token = token
        self.decision_lock = threading.Lock()


def _ranked_models(ranked) -> list[RankedActionModel]:
    return [
        RankedActionModel(
            rank=r.rank,
            action_id=r.candidate.action_id,
            primitive=r.candidate.primitive,
            target=r.candidate.target,
            containment=r.candidate.containment,
            business_impact=r.candidate.business_impact,
            execution_cost=r.candidate.execution_cost,
            composite=r.composite,
        )
        for r in ranked
    ]


def create_app(
    journal_dir: str | Path,
    config: AppConfig | None = None,
    token: str | None = None,
) -> FastAPI:
    journal = RunJournal(journal_dir)
    pipeline = pipeline_from_journal(journal)
    if config is not None:
        pipeline.config = config
    bearer = token if token is not None else (config.api.token if config else "")
    state = ServiceState(journal, pipeline, token=bearer)

    app = FastAPI(title="agentsoc", version=__version__)
    app.state.service = state

    def auth(request: Request) -> None:
        if not state.token:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {state.token}":
            raise HTTPException(status_code=401, detail="invalid or missing bearer token")

    @app.exception_handler(HTTPException)
    async def http_error(_request, exc: HTTPException):
        return JSONResponse(
            status_code=exc.status_code,
            content={"error": _reason(exc.status_code), "detail": exc.detail},
        )

    @app.exception_handler(RequestValidationError)
    async def body_error(_request, exc: RequestValidationError):
        return JSONResponse(status_code=422, content={"error": "unprocessable", "detail": str(exc)})

    @app.exception_handler(AgentSocError)
    async def engine_error(_request, exc: AgentSocError):
        return JSONResponse(status_code=500, content={"error": "internal", "detail": str(exc)})

    @app.get("/healthz", response_model=HealthResponse)
    def healthz() -> HealthResponse:
        return HealthResponse()

    @app.get("/metrics", response_model=MetricsResponse, dependencies=[Depends(auth)])
    def metrics() -> MetricsResponse:
        cycles = [state.journal.load_cycle(cid) for cid in state.journal.list_cycle_ids()]
        stats = stage_statistics(cycles)
        return MetricsResponse(
            cycles=len(cycles),
            stages={s: StageStats(**v) for s, v in stats.items()},
        )

    @app.get("/incidents", response_model=IncidentListResponse, dependencies=[Depends(auth)])
    def list_incidents(limit: int = 50, offset: int = 0, status: str | None = None) -> IncidentListResponse:
        if limit < 0 or offset < 0:
            raise HTTPException(status_code=422, detail="limit and offset must be >= 0")
        ids = state.journal.list_cycle_ids()
        summaries: list[IncidentSummary] = []
        for cid in ids:
            cycle = state.journal.load_cycle(cid)
            if status is not None and cycle.status != status:
                continue
            top = cycle.ranked[0] if cycle.ranked else None
            summaries.append(
                IncidentSummary(
                    cycle_id=cycle.cycle_id,
                    status=cycle.status,
                    incident_id=cycle.incident.incident_id if cycle.incident else None,
                    flags=list(cycle.incident.flags) if cycle.incident else [],
                    severity=cycle.incident.severity if cycle.incident else None,
                    top_action=f"{top.candidate.primitive}({top.candidate.target})" if top else None,
                    playbook_status=cycle.playbook.status.value if cycle.playbook else None,
                    guardrail_outcome=cycle.guardrail.outcome.value if cycle.guardrail else None,
                )
            )
        total = len(summaries)
        page = summaries[offset : offset + limit] if limit > 0 else []
        return IncidentListResponse(total=total, limit=limit, offset=offset, items=page)

    @app.get("/incidents/{cycle_id}", dependencies=[Depends(auth)])
    def incident_detail(cycle_id: str) -> dict:
        try:
            cycle = state.journal.load_cycle(cycle_id)
        except UnknownEntityError:
            raise HTTPException(status_code=404, detail=f"unknown cycle {cycle_id!r}") from None
        return cycle.to_json()

    @app.get("/approvals", response_model=ApprovalListResponse, dependencies=[Depends(auth)])
    def approvals() -> ApprovalListResponse:
        decisions = state.journal.approvals()
        items: list[ApprovalItem] = []
        for cid in state.journal.list_cycle_ids():
            cycle = state.journal.load_cycle(cid)
            if cycle.guardrail is None or cycle.playbook is None:
                continue
            if cycle.status != CycleStatus.AWAITING_ANALYST and cid not in decisions:
                continue
            record = decisions.get(cid, {})
            steps = ", ".join(f"{s.primitive}({s.target})" for s in cycle.playbook.steps)
            items.append(
                ApprovalItem(
                    cycle_id=cid,
                    playbook_summary=steps,
                    projected_impact=cycle.playbook.projected_impact,
                    triggered_rules=list(cycle.guardrail.triggered_rules),
                    requested_at=cycle.incident.created_at if cycle.incident else 0,
                    decided_by=record.get("decided_by"),
                    decision=record.get("decision"),
                    decided_at=record.get("decided_at"),
                )
            )
        return ApprovalListResponse(items=items)

    @app.post("/approvals/{cycle_id}", response_model=DecisionResponse, dependencies=[Depends(auth)])
    def decide(cycle_id: str, body: DecisionRequest) -> DecisionResponse:
        with state.decision_lock:
            try:
                cycle = state.journal.load_cycle(cycle_id)
            except UnknownEntityError:
                raise HTTPException(status_code=404, detail=f"unknown cycle {cycle_id!r}") from None
            decisions = state.journal.approvals()
            if cycle_id in decisions and decisions[cycle_id].get("decision"):
                raise HTTPException(status_code=409, detail=f"cycle {cycle_id} already decided")
            if cycle.status != CycleStatus.AWAITING_ANALYST:
                raise HTTPException(
                    status_code=409, detail=f"cycle {cycle_id} is not awaiting approval"
                )
            try:
                result = state.pipeline.resume_cycle(cycle_id, body.decision, analyst=body.analyst)
            except PipelineError as exc:
                raise HTTPException(status_code=409, detail=str(exc)) from None
            state.journal.record_decision(cycle_id, body.decision, body.analyst, time.time())
        return DecisionResponse(
            cycle_id=cycle_id,
            decision=body.decision,
            decided_by=body.analyst,
            playbook_status=result.playbook.status.value if result.playbook else "",
            cycle_status=result.status,
        )

    @app.post("/incidents/{cycle_id}/rescore", response_model=RescoreResponse, dependencies=[Depends(auth)])
    def rescore(cycle_id: str, body: RescoreRequest) -> RescoreResponse:
        try:
            weights = RiskWeights(alpha=body.alpha, beta=body.beta, gamma=body.gamma)
        except ValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        try:
            cycle = state.journal.load_cycle(cycle_id)
        except UnknownEntityError:
            raise HTTPException(status_code=404, detail=f"unknown cycle {cycle_id!r}") from None
        if not cycle.ranked:
            raise HTTPException(status_code=422, detail="cycle has no ranked actions")
        candidates: list[ActionCandidate] = [r.candidate for r in cycle.ranked]
        what_if = rank_actions(candidates, weights)
        return RescoreResponse(
            cycle_id=cycle_id,
            original=_ranked_models(cycle.ranked),
            what_if=_ranked_models(what_if),
            weights={"alpha": weights.alpha, "beta": weights.beta, "gamma": weights.gamma},
        )

    return app


def _reason(status_code: int) -> str:
    return {
        401: "unauthorized",
        404: "not_found",
        409: "conflict",
        422: "unprocessable",
    }.get(status_code, "error")
