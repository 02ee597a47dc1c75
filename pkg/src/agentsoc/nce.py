"""Narrative counterfactual engine: ranked attack-progression hypotheses.

The built-in generator is fully deterministic: seed techniques come from a
data-driven mapping over event types and flags, chains grow greedily along
the highest-weight transitions, and confidence is a bounded saturating
score over matched evidence features::

    malicious confidence = 1 - exp(-sum of matched feature weights)
    benign confidence    = benign_prior * (1 - max malicious confidence)

An optional HTTP adapter can propose hypotheses instead; its output is
schema-validated against the catalog and any failure falls back to the
built-in generator.
"""

from __future__ import annotations

import json
import logging
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import httpx

from .config import NceConfig
from .errors import AdapterError, ConfigError
from .knowledge import KnowledgeStore, TransitionTable
from .perception import IncidentObject

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

DEFAULT_FEATURE_WEIGHTS: dict[str, float] = {
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
}


@dataclass(frozen=True)
class EvidenceItem:
    feature: str
    weight: float

    def to_json(self) -> dict:
        return {"feature": self.feature, "weight": self.weight}

    @classmethod
    def from_json(cls, doc: Mapping) -> "EvidenceItem":
        return cls(feature=doc["feature"], weight=float(doc["weight"]))


@dataclass(frozen=True)
class Hypothesis:
    hypothesis_id: str
    description: str
    technique_chain: tuple[str, ...]
    confidence: float
    evidence: tuple[EvidenceItem, ...]
    missing_context: tuple[str, ...]
    kind: str  # "Malicious" | "Benign"

    def __post_init__(self) -> None:
        if self.kind not in ("Malicious", "Benign"):
            raise ValueError(f"hypothesis kind must be Malicious or Benign, got {self.kind!r}")
        if self.kind == "Malicious" and not self.technique_chain:
            raise ValueError("malicious hypotheses require a non-empty technique chain")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must be in [0, 1]")

    def to_json(self) -> dict:
        return {
            "hypothesis_id": self.hypothesis_id,
            "description": self.description,
            "technique_chain": list(self.technique_chain),
            "confidence": self.confidence,
            "evidence": [e.to_json() for e in self.evidence],
            "missing_context": list(self.missing_context),
            "kind": self.kind,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "Hypothesis":
        return cls(
            hypothesis_id=doc["hypothesis_id"],
            description=doc["description"],
            technique_chain=tuple(doc["technique_chain"]),
            confidence=float(doc["confidence"]),
            evidence=tuple(EvidenceItem.from_json(e) for e in doc.get("evidence", [])),
            missing_context=tuple(doc.get("missing_context", [])),
            kind=doc["kind"],
        )


@dataclass
class GeneratorConfig:
    max_hypotheses: int = 3
    max_chain_length: int = 4
    min_confidence_floor: float = 0.0
    feature_weights: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_FEATURE_WEIGHTS))
    benign_prior: float = 0.5
    # Data-driven seed mapping and per-technique supporting features.
    seed_map: dict[str, list[str]] = field(default_factory=dict)
    technique_evidence: dict[str, list[str]] = field(default_factory=dict)
    benign_technique: str | None = None

    @classmethod
    def from_nce_config(cls, cfg: NceConfig, tables: Mapping | None = None) -> "GeneratorConfig":
        gen = cls(
            max_hypotheses=cfg.max_hypotheses,
            max_chain_length=cfg.max_chain_length,
            min_confidence_floor=cfg.min_confidence_floor,
            benign_prior=cfg.benign_prior,
        )
        if tables:
            gen.feature_weights = {str(k): float(v) for k, v in tables.get("feature_weights", {}).items()}
            gen.seed_map = {str(k): list(v) for k, v in tables.get("seed_map", {}).items()}
            gen.technique_evidence = {str(k): list(v) for k, v in tables.get("technique_evidence", {}).items()}
            gen.benign_technique = tables.get("benign_technique")
        return gen

    def validate(self) -> None:
        if self.max_hypotheses < 1:
            raise ConfigError("max_hypotheses must be >= 1")
        if self.max_chain_length < 1:
            raise ConfigError("max_chain_length must be >= 1")
        if not 0.0 < self.benign_prior < 1.0:
            raise ConfigError("benign_prior must be in (0, 1)")
        for feature, weight in self.feature_weights.items():
            if not math.isfinite(weight):
                raise ConfigError(f"weight for {feature!r} must be finite")


def load_nce_tables(path: str | Path) -> dict:
    """Read the mapping/weight tables that ship alongside the snapshot."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return doc


def incident_features(incident: IncidentObject, notable_severity: int = 7) -> list[str]:
    """Feature tokens an incident contributes as candidate evidence."""
    features = [f"flag:{flag}" for flag in incident.flags]
    if incident.historical_baseline.startswith("No prior access"):
        features.append("baseline:first-access")
    features.append(f"outcome:{incident.outcome.lower()}")
    if incident.severity >= notable_severity:
        features.append("severity:high")
    return sorted(set(features))


def map_alert_to_techniques(incident: IncidentObject, config: GeneratorConfig) -> list[str]:
    """Deterministic seed techniques for an incident: event type then flags."""
    seeds: list[str] = []
    for key in [incident.event_type] + [f"flag:{f}" for f in incident.flags]:
        for tid in config.seed_map.get(key, []):
            if tid not in seeds:
                seeds.append(tid)
    return seeds


def _build_chain(
    seed: str,
    store: KnowledgeStore,
    transitions: TransitionTable,
    max_len: int,
) -> list[str]:
    """Greedy best-first chain: follow the heaviest transition, stop at a
    technique that lands a session on the target, at a dead end, or at the
    length cap. Cycles are excluded."""
    chain = [seed]
    while len(chain) < max_len:
        last = store.technique(chain[-1])
        if any(e.kind == "gain_session" and e.param("host") == "$target" for e in last.effects):
            break
        if not transitions.known(chain[-1]):
            break
        nxt = None
        for succ_id, _ in transitions.successors(chain[-1]):
            if succ_id not in chain and succ_id in store.techniques:
                nxt = succ_id
                break
        if nxt is None:
            break
        chain.append(nxt)
    return chain


def _describe(chain: Sequence[str], store: KnowledgeStore) -> str:
    parts = []
    for tid in chain:
        spec = store.technique(tid)
        parts.append(spec.phrase or spec.name)
    return " -> ".join(parts)


def generate_hypotheses(
    incident: IncidentObject,
    store: KnowledgeStore,
    config: GeneratorConfig,
) -> list[Hypothesis]:
    """Deterministic hypothesis list, sorted by confidence descending.

    A benign hypothesis is always present exactly once; malicious chains
    are derived from the seed mapping and transition table.
    """
    config.validate()
    features = incident_features(incident)
    missing: list[str] = []
    if "unknown-entity" in incident.flags:
        missing.append("entity context unresolved in the knowledge store")
    if incident.historical_baseline.startswith("No destination host"):
        missing.append("destination host absent from the event")
    if not incident.alerts:
        missing.append("original alert payloads unavailable")

    seeds = map_alert_to_techniques(incident, config)
    malicious: list[tuple[str, tuple[str, ...], tuple[EvidenceItem, ...], float]] = []
    budget = max(config.max_hypotheses - 1, 0)
    for seed in seeds[:budget]:
        if seed not in store.techniques:
            logger.warning("seed technique %s missing from catalog; skipped", seed)
            continue
        chain = _build_chain(seed, store, store.transitions, config.max_chain_length)
        supported = set()
        for tid in chain:
            supported.update(config.technique_evidence.get(tid, []))
        evidence = tuple(
            EvidenceItem(feature=f, weight=config.feature_weights.get(f, 0.0))
            for f in features
            if f in supported
        )
        total = sum(e.weight for e in evidence)
        confidence = 1.0 - math.exp(-total) if total > 0 else 0.0
        if confidence < config.min_confidence_floor:
            continue
        malicious.append((_describe(chain, store), tuple(chain), evidence, confidence))

    max_mal = max((m[3] for m in malicious), default=0.0)
    benign_conf = config.benign_prior * (1.0 - max_mal)
    benign_chain: tuple[str, ...] = ()
    if config.benign_technique and config.benign_technique in store.techniques:
        benign_chain = (config.benign_technique,)
    benign_desc = "Benign misconfiguration"
    if benign_chain:
        benign_desc = store.technique(benign_chain[0]).phrase or benign_desc

    entries: list[tuple[float, str, dict]] = []
    for desc, chain, evidence, confidence in malicious:
        entries.append(
            (
                confidence,
                desc,
                {
                    "description": desc,
                    "technique_chain": chain,
                    "confidence": confidence,
                    "evidence": evidence,
                    "kind": "Malicious",
                },
            )
        )
    entries.append(
        (
            benign_conf,
            benign_desc,
            {
                "description": benign_desc,
                "technique_chain": benign_chain,
                "confidence": benign_conf,
                "evidence": (),
                "kind": "Benign",
            },
        )
    )
    entries.sort(key=lambda e: (-e[0], e[1]))

    out: list[Hypothesis] = []
    for rank, (_, _, payload) in enumerate(entries, start=1):
        out.append(
            Hypothesis(
                hypothesis_id=f"H{rank}",
                missing_context=tuple(missing),
                **payload,
            )
        )
    return out


# ---------------------------------------------------------------------------
# External LLM adapter (off by default)
# ---------------------------------------------------------------------------

PROMPT_TEMPLATE = """You are an attack-progression analyst. Given the incident
below, propose up to {max_hypotheses} hypotheses for what the actor may be
doing, each anchored to technique ids from the candidate list.

INCIDENT
{incident_json}

CANDIDATE SEED TECHNIQUES
{seeds}
{missing_section}
OUTPUT SCHEMA (JSON, schema_version {schema_version})
{{"hypotheses": [{{"description": str, "technique_chain": [str, ...],
"confidence": float in [0,1], "kind": "Malicious"|"Benign",
"evidence": [{{"feature": str, "weight": float}}], "missing_context": [str]}}]}}
"""


def render_prompt(incident: IncidentObject, config: GeneratorConfig) -> str:
    """Deterministic prompt expansion for the external generator."""
    seeds = map_alert_to_techniques(incident, config)
    missing_section = ""
    if "unknown-entity" in incident.flags:
        missing_section = (
            "\nMISSING CONTEXT\nSome referenced entities are absent from the "
            "knowledge store; treat their attributes as unknown.\n"
        )
    return PROMPT_TEMPLATE.format(
        max_hypotheses=config.max_hypotheses,
        incident_json=json.dumps(incident.to_json(), sort_keys=True, indent=2),
        seeds="\n".join(f"- {s}" for s in seeds) if seeds else "- (none mapped)",
        missing_section=missing_section,
        schema_version=SCHEMA_VERSION,
    )


def parse_llm_response(text: str, store: KnowledgeStore) -> list[Hypothesis]:
    """Validate an external response; invalid entries are dropped with
    diagnostics, a wholly unusable response raises AdapterError."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise AdapterError(f"response is not JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("hypotheses"), list):
        raise AdapterError("response lacks a 'hypotheses' array")
    out: list[Hypothesis] = []
    for i, raw in enumerate(doc["hypotheses"]):
        if not isinstance(raw, dict):
            logger.warning("dropping hypothesis %d: not an object", i)
            continue
        chain = raw.get("technique_chain", [])
        if not isinstance(chain, list) or any(t not in store.techniques for t in chain):
            bad = [t for t in chain if t not in store.techniques] if isinstance(chain, list) else chain
            logger.warning("dropping hypothesis %d: unknown techniques %s", i, bad)
            continue
        kind = raw.get("kind", "Malicious")
        if kind not in ("Malicious", "Benign") or (kind == "Malicious" and not chain):
            logger.warning("dropping hypothesis %d: bad kind/chain combination", i)
            continue
        try:
            confidence = min(max(float(raw.get("confidence", 0.0)), 0.0), 1.0)
            evidence = tuple(
                EvidenceItem(feature=str(e["feature"]), weight=float(e["weight"]))
                for e in raw.get("evidence", [])
                if isinstance(e, dict) and "feature" in e and "weight" in e
            )
            out.append(
                Hypothesis(
                    hypothesis_id=f"H{len(out) + 1}",
                    description=str(raw.get("description", "")),
                    technique_chain=tuple(str(t) for t in chain),
                    confidence=confidence,
                    evidence=evidence,
                    missing_context=tuple(str(m) for m in raw.get("missing_context", [])),
                    kind=kind,
                )
            )
        except (TypeError, ValueError) as exc:
            logger.warning("dropping hypothesis %d: %s", i, exc)
    if not out:
        raise AdapterError("no valid hypotheses in response")
    out.sort(key=lambda h: (-h.confidence, h.description))
    return [
        Hypothesis(
            hypothesis_id=f"H{i}",
            description=h.description,
            technique_chain=h.technique_chain,
            confidence=h.confidence,
            evidence=h.evidence,
            missing_context=h.missing_context,
            kind=h.kind,
        )
        for i, h in enumerate(out, start=1)
    ]


class LlmAdapter:
    """HTTP transport for an external hypothesis generator.

    POSTs {prompt, schema_version}; expects a JSON body with a
    ``hypotheses`` array. Bounded concurrency, per-call timeout, and the
    deterministic generator as mandatory fallback are handled by callers
    via :func:`generate_with_fallback`.
    """

    def __init__(
        self,
        endpoint: str,
        timeout_s: float = 5.0,
        max_inflight: int = 4,
        transport: httpx.BaseTransport | None = None,
    ):
        self.endpoint = endpoint
        self.timeout_s = timeout_s
        self._gate = threading.Semaphore(max_inflight)
        self._client = httpx.Client(timeout=timeout_s, transport=transport)

    def propose(self, prompt: str, store: KnowledgeStore) -> list[Hypothesis]:
        with self._gate:
            try:
                response = self._client.post(
                    self.endpoint,
                    json={"prompt": prompt, "schema_version": SCHEMA_VERSION},
                )
            except httpx.HTTPError as exc:
                raise AdapterError(f"transport failure: {exc}") from exc
        if response.status_code != 200:
            raise AdapterError(f"endpoint returned {response.status_code}")
        return parse_llm_response(response.text, store)

    def close(self) -> None:
        self._client.close()


def generate_with_fallback(
    incident: IncidentObject,
    store: KnowledgeStore,
    config: GeneratorConfig,
    adapter: LlmAdapter | None = None,
) -> tuple[list[Hypothesis], str]:
    """Returns (hypotheses, generator_used). Fallback is mandatory: any
    adapter failure silently degrades to the built-in generator."""
    if adapter is not None:
        try:
            prompt = render_prompt(incident, config)
            return adapter.propose(prompt, store), "external"
        except AdapterError as exc:
            logger.warning("external generator failed (%s); using built-in", exc)
    return generate_hypotheses(incident, store, config), "builtin"
