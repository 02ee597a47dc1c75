"""AgentSOC: closed-loop SOC automation engine.

Sense-Reason-Act pipeline over authentication telemetry: ingest and
baseline events, enrich alert clusters against an enterprise knowledge
graph, generate ATT&CK-anchored attack hypotheses, validate their
structural feasibility, rank containment actions by risk-weighted
composite score, and execute guardrailed playbooks with audit trails
and rollback.
"""

__version__ = "0.1.0"
