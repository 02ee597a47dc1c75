"""Exception hierarchy shared across the engine."""

from __future__ import annotations


class AgentSocError(Exception):
    """Base class for all engine errors."""


class ConfigError(AgentSocError):
    """Invalid configuration value or section."""


class ParseError(AgentSocError):
    """A malformed input line or record."""

    def __init__(self, message: str, line_no: int | None = None):
        super().__init__(message)
        self.line_no = line_no


class SnapshotError(AgentSocError):
    """Knowledge snapshot failed to load or violates invariants."""


class UnknownEntityError(AgentSocError):
    """Lookup of a node, technique, or cycle that does not exist."""


class DeltaError(AgentSocError):
    """A knowledge delta is internally inconsistent or not applicable."""


class NormalizationError(AgentSocError):
    """A raw alert could not be mapped into the unified schema."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class EnrichmentUnavailableError(AgentSocError):
    """Knowledge store unavailable during enrichment; safe to retry."""


class AdapterError(AgentSocError):
    """External hypothesis generator returned an unusable response."""


class ValidationError(AgentSocError):
    """An operation argument is out of its declared range."""


class ExecutionError(AgentSocError):
    """A playbook step could not be applied."""


class RollbackConflictError(AgentSocError):
    """Store state has diverged; rollback would not restore the prior graph."""


class PipelineError(AgentSocError):
    """Cycle orchestration failure, attributed to a stage."""

    def __init__(self, message: str, stage: str | None = None):
        super().__init__(message)
        self.stage = stage
