"""Configuration: TOML file sections per module, env and flag overrides.

Precedence: explicit overrides (CLI flags) > environment variables
(``AGENTSOC_<SECTION>_<KEY>``) > config file > defaults.
"""

from __future__ import annotations

import dataclasses
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError


@dataclass
class IngestConfig:
    failure_count: int = 5
    failure_window_s: int = 300
    lateral_hosts: int = 3
    lateral_window_s: int = 300
    baseline_fraction: float = 0.5
    strict_parse: bool = False
    severity_first_time_host_access: int = 6
    severity_cross_tier_access: int = 8
    severity_repeated_failure: int = 5
    severity_short_interval_lateral_move: int = 7
    severity_cross_domain_access: int = 5
    severity_geo_change: int = 6
    cross_tier_criticality: int = 8
    cross_tier_user_tier: int = 2

    def validate(self) -> None:
        if self.failure_count < 1:
            raise ConfigError("ingest.failure_count must be >= 1")
        if self.failure_window_s <= 0:
            raise ConfigError("ingest.failure_window_s must be > 0")
        if self.lateral_hosts < 2:
            raise ConfigError("ingest.lateral_hosts must be >= 2")
        if self.lateral_window_s <= 0:
            raise ConfigError("ingest.lateral_window_s must be > 0")
        if not 0.0 <= self.baseline_fraction <= 1.0:
            raise ConfigError("ingest.baseline_fraction must be in [0, 1]")


@dataclass
class PerceptionConfig:
    dedup_bucket_s: int = 60
    notable_severity: int = 7
    cross_tier_criticality: int = 8
    cross_tier_user_tier: int = 2
    incident_source_label: str = "RUN"

    def validate(self) -> None:
        if self.dedup_bucket_s <= 0:
            raise ConfigError("perception.dedup_bucket_s must be > 0")
        if not 1 <= self.notable_severity <= 10:
            raise ConfigError("perception.notable_severity must be in [1, 10]")


@dataclass
class NceConfig:
    max_hypotheses: int = 3
    max_chain_length: int = 4
    min_confidence_floor: float = 0.0
    benign_prior: float = 0.5
    llm_enabled: bool = False
    llm_endpoint: str = ""
    llm_timeout_s: float = 5.0
    llm_max_inflight: int = 4

    def validate(self) -> None:
        if self.max_hypotheses < 1:
            raise ConfigError("nce.max_hypotheses must be >= 1")
        if self.max_chain_length < 1:
            raise ConfigError("nce.max_chain_length must be >= 1")
        if not 0.0 < self.benign_prior < 1.0:
            raise ConfigError("nce.benign_prior must be in (0, 1)")
        if self.llm_enabled and not self.llm_endpoint:
            raise ConfigError("nce.llm_endpoint required when llm_enabled")


@dataclass
class RsemConfig:
    alpha: float = 0.7
    beta: float = 0.3
    gamma: float = 0.0
    default_impact: float = 0.5

    def validate(self) -> None:
        if self.alpha <= 0:
            raise ConfigError("rsem.alpha must be > 0")
        if self.beta < 0 or self.gamma < 0:
            raise ConfigError("rsem.beta and rsem.gamma must be >= 0")


@dataclass
class PlaybookConfig:
    approval_threshold: float = 0.5

    def validate(self) -> None:
        if not 0.0 <= self.approval_threshold <= 1.0:
            raise ConfigError("playbook.approval_threshold must be in [0, 1]")


@dataclass
class MonitorConfig:
    correlation_window_s: int = 600
    rollback_on_failed: bool = True
    rollback_on_partial: bool = False

    def validate(self) -> None:
        if self.correlation_window_s <= 0:
            raise ConfigError("monitor.correlation_window_s must be > 0")


@dataclass
class PipelineConfig:
    workers: int = 0  # 0 = logical CPU count
    enrich_retry_limit: int = 2

    def validate(self) -> None:
        if self.workers < 0:
            raise ConfigError("pipeline.workers must be >= 0")
        if self.enrich_retry_limit < 0:
            raise ConfigError("pipeline.enrich_retry_limit must be >= 0")


@dataclass
class ApiConfig:
    host: str = "127.0.0.1"
    port: int = 8787
    token: str = ""
    journal: str = ""

    def validate(self) -> None:
        if not 0 < self.port < 65536:
            raise ConfigError("api.port must be a valid TCP port")


@dataclass
class AppConfig:
    """Merged view of every module's config section."""

    ingest: IngestConfig = field(default_factory=IngestConfig)
    perception: PerceptionConfig = field(default_factory=PerceptionConfig)
    nce: NceConfig = field(default_factory=NceConfig)
    rsem: RsemConfig = field(default_factory=RsemConfig)
    playbook: PlaybookConfig = field(default_factory=PlaybookConfig)
    monitor: MonitorConfig = field(default_factory=MonitorConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    api: ApiConfig = field(default_factory=ApiConfig)

    def validate(self) -> None:
        for f in fields(self):
            getattr(self, f.name).validate()


_SECTIONS = {
    "ingest": IngestConfig,
    "perception": PerceptionConfig,
    "nce": NceConfig,
    "rsem": RsemConfig,
    "playbook": PlaybookConfig,
    "monitor": MonitorConfig,
    "pipeline": PipelineConfig,
    "api": ApiConfig,
}


def _coerce(raw: Any, target_type: type) -> Any:
    if target_type is bool:
        if isinstance(raw, bool):
            return raw
        if isinstance(raw, str):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return bool(raw)
    if target_type is int:
        return int(raw)
    if target_type is float:
        return float(raw)
    return str(raw)


def _apply(section_obj: Any, section_name: str, values: dict[str, Any]) -> None:
    known = {f.name: f.type for f in dataclasses.fields(section_obj)}
    hints = {f.name: type(getattr(section_obj, f.name)) for f in dataclasses.fields(section_obj)}
    for key, raw in values.items():
        if key not in known:
            raise ConfigError(f"unknown key '{key}' in section [{section_name}]")
        try:
            setattr(section_obj, key, _coerce(raw, hints[key]))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {section_name}.{key}: {raw!r}") from exc


def load_config(
    path: str | Path | None = None,
    overrides: dict[str, dict[str, Any]] | None = None,
    env: dict[str, str] | None = None,
) -> AppConfig:
    """Build the merged config. ``overrides`` maps section -> key -> value."""
    cfg = AppConfig()

    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        with open(p, "rb") as fh:
            try:
                doc = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"config file {p} is not valid TOML: {exc}") from exc
        for section, values in doc.items():
            if section not in _SECTIONS:
                raise ConfigError(f"unknown config section [{section}]")
            if not isinstance(values, dict):
                raise ConfigError(f"section [{section}] must be a table")
            _apply(getattr(cfg, section), section, values)

    environ = os.environ if env is None else env
    for section in _SECTIONS:
        obj = getattr(cfg, section)
        for f in dataclasses.fields(obj):
            env_key = f"AGENTSOC_{section.upper()}_{f.name.upper()}"
            if env_key in environ:
                _apply(obj, section, {f.name: environ[env_key]})

    for section, values in (overrides or {}).items():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown override section '{section}'")
        _apply(getattr(cfg, section), section, values)

    cfg.validate()
    return cfg
