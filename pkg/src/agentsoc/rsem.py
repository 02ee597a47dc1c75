"""Risk scoring: containment vs business impact, composite ranking.

``composite = alpha*containment - beta*impact - gamma*cost`` with gamma
defaulting to 0, which reduces the formula to the two-term weighted
difference. Containment is measured structurally: the fraction of
feasible witness paths an action's simulated graph mutation cuts, then
mapped through a declared per-primitive calibration table (the raw
fraction is always reported alongside the calibrated value).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .config import RsemConfig
from .errors import ValidationError
from .knowledge import EdgeKind, EnterpriseGraph, ImpactParams, KnowledgeStore
from .perception import IncidentObject
from .sse import FeasibilityVerdict, Witness

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RiskWeights:
    alpha: float = 0.7
    beta: float = 0.3
    gamma: float = 0.0

    def __post_init__(self) -> None:
        if self.alpha <= 0:
            raise ValidationError("alpha must be > 0")
        if self.beta < 0 or self.gamma < 0:
            raise ValidationError("beta and gamma must be >= 0")

    @classmethod
    def from_config(cls, cfg: RsemConfig) -> "RiskWeights":
        return cls(alpha=cfg.alpha, beta=cfg.beta, gamma=cfg.gamma)


@dataclass(frozen=True)
class ActionCandidate:
    action_id: str
    primitive: str
    target: str
    containment: float
    business_impact: float
    execution_cost: float = 0.0
    containment_raw: float | None = None
    rationale: str = ""

    def __post_init__(self) -> None:
        for name in ("containment", "business_impact", "execution_cost"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} must be in [0, 1], got {v}")

    def to_json(self) -> dict:
        return {
            "action_id": self.action_id,
            "primitive": self.primitive,
            "target": self.target,
            "containment": self.containment,
            "containment_raw": self.containment_raw,
            "business_impact": self.business_impact,
            "execution_cost": self.execution_cost,
            "rationale": self.rationale,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "ActionCandidate":
        return cls(
            action_id=doc["action_id"],
            primitive=doc["primitive"],
            target=doc["target"],
            containment=float(doc["containment"]),
            business_impact=float(doc["business_impact"]),
            execution_cost=float(doc.get("execution_cost", 0.0)),
            containment_raw=doc.get("containment_raw"),
            rationale=doc.get("rationale", ""),
        )


@dataclass(frozen=True)
class RankedAction:
    rank: int
    candidate: ActionCandidate
    composite: float

    def to_json(self) -> dict:
        return {"rank": self.rank, "composite": self.composite, "candidate": self.candidate.to_json()}

    @classmethod
    def from_json(cls, doc: Mapping) -> "RankedAction":
        return cls(
            rank=int(doc["rank"]),
            candidate=ActionCandidate.from_json(doc["candidate"]),
            composite=float(doc["composite"]),
        )


def composite_score(
    containment: float,
    impact: float,
    cost: float = 0.0,
    weights: RiskWeights = RiskWeights(),
) -> float:
    """Weighted composite in double precision; inputs must lie in [0, 1]."""
    for name, value in (("containment", containment), ("impact", impact), ("cost", cost)):
        if not 0.0 <= value <= 1.0:
            raise ValidationError(f"{name} must be in [0, 1], got {value}")
    return weights.alpha * containment - weights.beta * impact - weights.gamma * cost


# ---------------------------------------------------------------------------
# Containment estimation
# ---------------------------------------------------------------------------

DEFAULT_CALIBRATION: dict[str, dict] = {
    "ISOLATE_HOST": {"mode": "scale", "factor": 0.92},
    "DISABLE_USER": {"mode": "scale", "factor": 0.84},
    "QUARANTINE_ACCESS": {"mode": "scale", "factor": 0.9},
    "REVOKE_SESSION": {"mode": "scale", "factor": 0.7},
    "RESTRICT_PRIVILEGES": {"mode": "scale", "factor": 0.6},
    "ENABLE_MFA": {"mode": "scale", "factor": 0.5},
    "MONITOR_ONLY": {"mode": "constant", "value": 0.15},
}


def load_calibration(path: str | Path) -> dict[str, dict]:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def calibrate(primitive: str, raw: float, calibration: Mapping[str, Mapping] | None = None) -> float:
    table = calibration if calibration is not None else DEFAULT_CALIBRATION
    entry = table.get(primitive)
    if entry is None:
        return raw
    if entry.get("mode") == "constant":
        return float(entry["value"])
    if entry.get("mode") == "scale":
        return min(max(float(entry["factor"]) * raw, 0.0), 1.0)
    raise ValidationError(f"bad calibration entry for {primitive}: {entry!r}")


def _witness_survives(witness: Witness, graph: EnterpriseGraph) -> bool:
    """A witness survives a mutation when its actor still holds a foothold on
    the start node and every traced edge is still present."""
    if not witness.nodes:
        return False
    start = witness.nodes[0]
    actor = witness.actor
    foothold = False
    if graph.has_node(actor) and graph.has_node(start):
        foothold = graph.edge_exists(actor, start, EdgeKind.HAS_SESSION_ON) or graph.edge_exists(
            actor, start, EdgeKind.CAN_AUTH_TO
        )
    if not foothold:
        return False
    for src, dst, kind, protocol in witness.edges:
        if not graph.edge_exists(src, dst, EdgeKind(kind), protocol):
            return False
    return True


def estimate_containment(
    primitive: str,
    target: str,
    verdicts: Sequence[FeasibilityVerdict],
    graph: EnterpriseGraph,
    calibration: Mapping[str, Mapping] | None = None,
) -> tuple[float, float]:
    """(calibrated, raw) containment for applying ``primitive`` to ``target``.

    raw = cut witnesses / total witnesses, measured by simulating the
    primitive's graph mutation on a scratch copy and re-checking each
    witness trace. No witnesses means raw 0.
    """
    from .playbook import build_primitive_delta  # local import; playbook imports rsem

    witnesses = [v.witness for v in verdicts if v.witness is not None]
    if not witnesses:
        raw = 0.0
    else:
        delta = build_primitive_delta(primitive, target, graph, delta_id="scratch")
        if delta.is_empty():
            mutated = graph
        else:
            from .knowledge import apply_ops

            mutated = apply_ops(graph, delta.ops)
        cut = sum(1 for w in witnesses if not _witness_survives(w, mutated))
        raw = cut / len(witnesses)
    return calibrate(primitive, raw, calibration), raw


# ---------------------------------------------------------------------------
# Impact estimation
# ---------------------------------------------------------------------------

def estimate_impact(
    primitive: str,
    target: str,
    impact_params: Mapping[str, ImpactParams],
    disruption_factor: float,
    default_impact: float = 0.5,
) -> float:
    """Mean of the target's impact parameters scaled by the primitive's
    disruption factor; MONITOR_ONLY is always 0."""
    if primitive == "MONITOR_ONLY":
        return 0.0
    params = impact_params.get(target)
    if params is None:
        logger.warning("no impact parameters for %s; using default %.2f", target, default_impact)
        base = default_impact
    else:
        base = (params.downtime_cost + params.user_disruption + params.compliance_sensitivity) / 3.0
    return min(max(base * disruption_factor, 0.0), 1.0)


# ---------------------------------------------------------------------------
# Candidate generation and ranking
# ---------------------------------------------------------------------------

def propose_candidates(
    incident: IncidentObject,
    verdicts: Sequence[FeasibilityVerdict],
    store: KnowledgeStore,
    calibration: Mapping[str, Mapping] | None = None,
    default_impact: float = 0.5,
) -> list[ActionCandidate]:
    """Candidate containment actions for an incident, in generation order:
    isolate the source host, disable the principal, monitor."""
    from .playbook import PRIMITIVES

    graph = store.graph
    proposals: list[tuple[str, str, str]] = []
    if incident.source_host.known and graph.has_node(incident.source_host.id):
        proposals.append(
            ("ISOLATE_HOST", incident.source_host.id, f"cut network reachability of {incident.source_host.id}")
        )
    if incident.user.known and graph.has_node(incident.user.id):
        proposals.append(
            ("DISABLE_USER", incident.user.id, f"revoke sessions and auth paths of {incident.user.id}")
        )
    proposals.append(("MONITOR_ONLY", incident.source_host.id, "observe without intervention"))

    candidates: list[ActionCandidate] = []
    for index, (primitive, target, rationale) in enumerate(proposals, start=1):
        spec = PRIMITIVES[primitive]
        calibrated, raw = estimate_containment(primitive, target, verdicts, graph, calibration)
        impact = estimate_impact(
            primitive, target, store.impact_params, spec.disruption_factor, default_impact
        )
        candidates.append(
            ActionCandidate(
                action_id=f"A{index}",
                primitive=primitive,
                target=target,
                containment=calibrated,
                containment_raw=raw,
                business_impact=impact,
                execution_cost=spec.execution_cost,
                rationale=rationale,
            )
        )
    return candidates


def rank_actions(candidates: Sequence[ActionCandidate], weights: RiskWeights) -> list[RankedAction]:
    """Sort by composite desc; ties by lower impact, lower cost, id."""
    if not candidates:
        raise ValidationError("candidate list must be non-empty")
    scored = [
        (composite_score(c.containment, c.business_impact, c.execution_cost, weights), c)
        for c in candidates
    ]
    scored.sort(key=lambda sc: (-sc[0], sc[1].business_impact, sc[1].execution_cost, sc[1].action_id))
    return [
        RankedAction(rank=i, candidate=c, composite=score)
        for i, (score, c) in enumerate(scored, start=1)
    ]
