"""Command-line entry point; all work delegates to the library modules.

Exit codes for ``run``: 0 success, 2 completed with per-cycle failures,
1 fatal error. stdout carries data; diagnostics go to stderr.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from .config import AppConfig, load_config
from .errors import AgentSocError, ConfigError
from .fixture import generate_fixture
from .nce import GeneratorConfig, load_nce_tables
from .pipeline import RunJournal, render_report_table, run_batch
from .playbook import ExecutionMode
from .rsem import load_calibration

logger = logging.getLogger(__name__)


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )


def _load_app_config(config_path: str | None, snapshot: str | None) -> AppConfig:
    """Explicit --config wins; otherwise an agentsoc.toml next to the
    snapshot is picked up, making fixture directories self-contained."""
    if config_path:
        return load_config(config_path)
    if snapshot:
        sibling = Path(snapshot).parent / "agentsoc.toml"
        if sibling.exists():
            return load_config(sibling)
    return load_config(None)


def _sibling(snapshot: str, name: str) -> Path | None:
    candidate = Path(snapshot).parent / name
    return candidate if candidate.exists() else None


@click.group()
@click.option("--verbose", is_flag=True, help="debug logging on stderr")
def main(verbose: bool) -> None:
    """Closed-loop SOC automation engine."""
    _setup_logging(verbose)


@main.command()
@click.option("--events", required=True, type=click.Path(), help="auth event file (9-field CSV)")
@click.option("--snapshot", required=True, type=click.Path(), help="knowledge snapshot JSON")
@click.option("--config", "config_path", type=click.Path(), default=None, help="TOML config file")
@click.option("--live", is_flag=True, help="apply playbook deltas instead of dry-run")
@click.option("--out", "out_dir", type=click.Path(), default=None, help="run journal directory")
@click.option("--workers", type=int, default=None, help="concurrent cycles (default: CPU count)")
def run(events: str, snapshot: str, config_path: str | None, live: bool, out_dir: str | None, workers: int | None) -> None:
    """Process an event file end to end and write the batch report."""
    try:
        cfg = _load_app_config(config_path, snapshot)
        if not Path(snapshot).exists():
            raise AgentSocError(f"snapshot file not found: {snapshot}")
        if not Path(events).exists():
            raise AgentSocError(f"events file not found: {events}")
        tables_path = _sibling(snapshot, "nce_tables.json")
        gen_config = (
            GeneratorConfig.from_nce_config(cfg.nce, load_nce_tables(tables_path))
            if tables_path
            else None
        )
        calibration_path = _sibling(snapshot, "calibration.json")
        calibration = load_calibration(calibration_path) if calibration_path else None
        mode = ExecutionMode.LIVE if live else ExecutionMode.DRY_RUN
        report = run_batch(
            events,
            snapshot,
            cfg,
            mode=mode,
            out_dir=out_dir,
            gen_config=gen_config,
            calibration=calibration,
            workers=workers,
        )
    except (AgentSocError, ConfigError, OSError) as exc:
        click.echo(f"fatal: {exc}", err=True)
        sys.exit(1)
    doc = report.to_json()
    click.echo(json.dumps(doc, sort_keys=True))
    if report.failures:
        click.echo(f"{len(report.failures)} cycle(s) failed", err=True)
        sys.exit(2)


@main.command()
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
def fixture(seed: int, out_dir: str) -> None:
    """Emit the deterministic 50-node scenario directory."""
    try:
        paths = generate_fixture(seed, out_dir)
    except OSError as exc:
        click.echo(f"fatal: cannot write fixture: {exc}", err=True)
        sys.exit(1)
    click.echo(json.dumps({k: str(v) for k, v in sorted(paths.items())}, sort_keys=True))


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--journal", type=click.Path(), default=None, help="run journal directory")
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
def serve(config_path: str | None, journal: str | None, host: str | None, port: int | None) -> None:
    """Serve the HTTP API over a run journal."""
    import uvicorn

    from .service import create_app

    try:
        cfg = load_config(config_path) if config_path else load_config(None)
        journal_dir = journal or cfg.api.journal
        if not journal_dir:
            raise ConfigError("no journal directory (use --journal or [api] journal)")
        app = create_app(journal_dir, cfg)
    except (AgentSocError, ConfigError) as exc:
        click.echo(f"fatal: {exc}", err=True)
        sys.exit(1)
    uvicorn.run(app, host=host or cfg.api.host, port=port or cfg.api.port, log_level="warning")


@main.command()
@click.argument("run_dir", type=click.Path())
def report(run_dir: str) -> None:
    """Render the human-readable summary for a completed run."""
    try:
        journal = RunJournal(run_dir)
        doc = journal.load_report()
    except AgentSocError as exc:
        click.echo(f"fatal: {exc}", err=True)
        sys.exit(1)
    click.echo(render_report_table(doc), nl=False)
    for cycle in doc.get("cycles", []):
        incident = cycle.get("incident") or {}
        playbook = cycle.get("playbook") or {}
        steps = ", ".join(f"{s['primitive']}({s['target']})" for s in playbook.get("steps", []))
        click.echo(
            f"{cycle['cycle_id']}: status={cycle['status']} "
            f"flags={','.join(incident.get('flags', [])) or '-'} "
            f"playbook=[{steps}] ({playbook.get('status', '-')})"
        )


if __name__ == "__main__":
    main()
